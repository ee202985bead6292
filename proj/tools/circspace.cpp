// circspace: fit, predict, score and diagnose spatial models for directional data.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "circspace/gauss_core.hpp"
#include "circspace/io/config.hpp"
#include "circspace/io/runner.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitNumeric = 3;

struct Flags {
  std::string config;
  std::string data;
  std::string targets;
  std::string draws;
  std::string predictions;
  std::string out;
  std::string warm_start;
  std::optional<std::int64_t> seed_override;
  std::optional<int> chains;
  bool quiet = false;
};

circspace::io::RunConfig load(const Flags& f, bool required) {
  using namespace circspace::io;
  json root = json::object();
  if (!f.config.empty()) root = read_json_file(f.config);
  else if (required) throw ValidationError("--config is required for this command");
  if (f.seed_override) {
    if (*f.seed_override < 0) throw ValidationError("--seed-override must be >= 0");
    root["seed"] = *f.seed_override;
  }
  if (f.chains) root["chains"] = *f.chains;
  auto cfg = parse_config(root, environ, required);
  // command-line flags win over the environment
  if (f.seed_override) cfg.seed = static_cast<std::uint64_t>(*f.seed_override);
  if (f.chains) {
    if (*f.chains < 1) throw ValidationError("--chains must be >= 1");
    cfg.chains = *f.chains;
  }
  cfg.echo["seed"] = cfg.seed;
  cfg.echo["chains"] = cfg.chains;
  return cfg;
}

void print(const nlohmann::json& j, const Flags& f) {
  if (!f.quiet) std::cout << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  using namespace circspace::io;
  CLI::App app{"Bayesian interpolation of spatial and spatio-temporal directional data"};
  app.require_subcommand(1);
  app.footer(
      "Every config key can be overridden by an environment variable CIRCSPACE_<SECTION>_<KEY>,\n"
      "e.g. CIRCSPACE_MCMC_ITERS=5000. Command-line flags take precedence.\n"
      "Exit codes: 0 success, 2 validation failure, 3 numeric failure.");
  Flags f;
  app.add_flag("-q,--quiet", f.quiet, "Suppress the JSON summary on stdout");

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic field from the config's simulate block");
  sim->add_option("--config", f.config, "Run configuration (JSON)")->required();
  sim->add_option("--out", f.out, "Output directory");
  sim->add_option("--seed-override", f.seed_override, "Replace the configured seed");

  auto* fit = app.add_subcommand("fit", "Run the MCMC sampler and store draws");
  fit->add_option("--config", f.config, "Run configuration (JSON)")->required();
  fit->add_option("--data", f.data, "Dataset CSV (overrides data.path)");
  fit->add_option("--out", f.out, "Output directory (overrides output.dir)");
  fit->add_option("--seed-override", f.seed_override, "Replace the configured seed");
  fit->add_option("--chains", f.chains, "Number of chains");
  fit->add_option("--warm-start", f.warm_start, "Continue the chains stored in this fit directory");

  auto* pred = app.add_subcommand("predict", "Krige at target sites from stored draws");
  pred->add_option("--draws", f.draws, "Fit output directory")->required();
  pred->add_option("--targets", f.targets, "Target sites CSV");
  pred->add_option("--data", f.data, "Dataset used by the fit (default: the recorded path)");
  pred->add_option("--out", f.out, "Output directory")->required();
  pred->add_option("--config", f.config, "Optional configuration (targets.path, output.write_samples)");
  pred->add_option("--seed-override", f.seed_override, "Seed for the predictive draws");

  auto* dia = app.add_subcommand("diagnose", "Potential scale reduction factors for stored draws");
  dia->add_option("--draws", f.draws, "Fit output directory")->required();
  dia->add_option("--out", f.out, "Directory for diagnostics.json");

  auto* sco = app.add_subcommand("score", "APE and circular CRPS against held-out truth");
  sco->add_option("--predictions", f.predictions, "Prediction output directory")->required();
  sco->add_option("--data", f.data, "Truth CSV")->required();
  sco->add_option("--out", f.out, "Output directory")->required();
  sco->add_option("--config", f.config, "Optional configuration (data ingest options, score.max_match_distance)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      print(run_simulate(load(f, true), f.out), f);
    } else if (*fit) {
      print(run_fit(load(f, true), FitArgs{f.data, f.out, f.warm_start}), f);
    } else if (*pred) {
      const auto cfg = load(f, false);
      PredictArgs a{f.draws, f.data, f.targets.empty() ? cfg.targets_path : f.targets, f.out, cfg.seed, cfg.write_samples};
      print(run_predict(a), f);
    } else if (*dia) {
      print(run_diagnose(f.draws, f.out), f);
    } else if (*sco) {
      const auto cfg = load(f, false);
      ScoreArgs a{f.predictions, f.data, f.out, std::nullopt, cfg.max_match_distance};
      if (!f.config.empty()) a.ingest = cfg.ingest;
      print(run_score(a), f);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const circspace::NotPositiveDefinite& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::domain_error& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}
