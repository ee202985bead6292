#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "circspace/diagnostics.hpp"
#include "circspace/io/config.hpp"
#include "circspace/io/csv.hpp"
#include "circspace/io/store.hpp"
#include "circspace/krige_score.hpp"
#include "circspace/projected_model.hpp"
#include "circspace/simulate.hpp"
#include "circspace/wrapped_model.hpp"

namespace circspace::io {

/// Numerical breakdown (no usable factorization, non-finite results). Maps to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline std::string out_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline json stats_json(const ChainStats& s) {
  return {{"block_proposals", s.block_proposals},
          {"block_accepts", s.block_accepts},
          {"block_rate", s.block_rate()},
          {"latent_proposals", s.latent_proposals},
          {"latent_accepts", s.latent_accepts},
          {"latent_rate", s.latent_rate()}};
}

inline json diagnostics_json(const DiagnosticsReport& rep) {
  json params = json::array();
  for (const auto& p : rep.params) {
    json e{{"name", p.name}, {"circular", p.circular}};
    e["psrf"] = std::isfinite(p.psrf) ? json(p.psrf) : json("inf");
    params.push_back(e);
  }
  json j{{"params", params}, {"max_psrf", std::isfinite(rep.max_psrf()) ? json(rep.max_psrf()) : json("inf")}};
  j["mpsrf"] = std::isfinite(rep.mpsrf) ? json(rep.mpsrf) : json(nullptr);
  if (!rep.mpsrf_note.empty()) j["mpsrf_note"] = rep.mpsrf_note;
  json acc = json::array();
  for (const auto& s : rep.stats) acc.push_back(stats_json(s));
  j["acceptance"] = acc;
  return j;
}

/// Central arc holding `level` of the samples, as bounds measured from the mean direction.
inline std::pair<double, double> central_arc(std::vector<double> dev, double level) {
  std::sort(dev.begin(), dev.end());
  const auto q = [&](double p) {
    const double pos = p * static_cast<double>(dev.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, dev.size() - 1);
    return dev[lo] + (pos - static_cast<double>(lo)) * (dev[hi] - dev[lo]);
  };
  return {q(0.5 * (1.0 - level)), q(0.5 * (1.0 + level))};
}

}  // namespace detail

struct FitArgs {
  std::string data_path;
  std::string out_dir;
  std::string warm_start_dir;  // empty: cold start
};

/// Fit the configured model and write draws, end states, diagnostics and a manifest.
inline json run_fit(const RunConfig& cfg, const FitArgs& args) {
  const std::string data_path = args.data_path.empty() ? cfg.data_path : args.data_path;
  if (data_path.empty()) throw ValidationError("no dataset given (--data or data.path)");
  const std::string out_dir = args.out_dir.empty() ? cfg.out_dir : args.out_dir;
  const CircularDataset data = ingest(data_path, cfg.ingest);
  if (data.temporal() != is_temporal(cfg.model))
    throw ValidationError(is_temporal(cfg.model) ? "model " + model_name(cfg.model) + " needs a time column in the data"
                                                 : "the data have a time column; use wn_st or pn_st");
  const std::string checksum = file_sha256(data_path);
  ensure_dir(out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  PosteriorDraws draws;
  json states = json::array();
  try {
    if (is_wrapped(cfg.model)) {
      std::vector<WnChainState> warm;
      if (!args.warm_start_dir.empty())
        for (int c = 0; c < cfg.chains; ++c)
          warm.push_back(wn_state_from_json(read_json_file(state_file(args.warm_start_dir, static_cast<std::size_t>(c)))));
      auto fit = fit_wn(data, cfg.spec, cfg.wn, cfg.mcmc, cfg.adapt, cfg.fit_options(), warm.empty() ? nullptr : &warm);
      draws = std::move(fit.draws);
      for (const auto& s : fit.end_states) states.push_back(state_to_json(s));
    } else {
      std::vector<PnChainState> warm;
      if (!args.warm_start_dir.empty())
        for (int c = 0; c < cfg.chains; ++c)
          warm.push_back(pn_state_from_json(read_json_file(state_file(args.warm_start_dir, static_cast<std::size_t>(c)))));
      auto fit = fit_pn(data, cfg.spec, cfg.pn, cfg.mcmc, cfg.adapt, cfg.fit_options(), warm.empty() ? nullptr : &warm);
      draws = std::move(fit.draws);
      for (const auto& s : fit.end_states) states.push_back(state_to_json(s));
    }
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  } catch (const std::domain_error& e) {
    throw NumericError(e.what());
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  for (std::size_t c = 0; c < draws.chains.size(); ++c) {
    write_draw_table(chain_file(out_dir, c), draws.chains[c]);
    write_text(state_file(out_dir, c), states[c].dump(2) + "\n");
  }

  json diag;
  const auto stored = draws.chains.empty() ? 0 : draws.chains.front().rows.size();
  if (draws.chains.size() >= 2 && stored >= 10) {
    diag = detail::diagnostics_json(diagnose(draws));
  } else {
    diag = {{"note", "diagnostics need at least two chains of at least 10 stored draws"}};
  }
  write_text(detail::out_path(out_dir, "diagnostics.json"), diag.dump(2) + "\n");

  json acc = json::array();
  for (const auto& s : draws.stats) acc.push_back(detail::stats_json(s));
  json manifest{
      {"tool", "circspace"},
      {"version", kToolVersion},
      {"model", model_name(cfg.model)},
      {"model_kind", is_wrapped(cfg.model) ? "wn" : "pn"},
      {"correlation", spec_to_json(cfg.spec)},
      {"shift", draws.shift},
      {"chains", draws.chains.size()},
      {"seeds", [&] {
         json s = json::array();
         for (int c = 0; c < cfg.chains; ++c) s.push_back(cfg.seed + static_cast<std::uint64_t>(c));
         return s;
       }()},
      {"stored_draws_per_chain", stored},
      {"columns", draws.chains.empty() ? json::array() : json(draws.chains.front().columns)},
      {"dataset", {{"path", data_path}, {"sha256", checksum}, {"rows", data.size()}}},
      {"ingest",
       {{"angle_unit", std::string(angle_unit_name(cfg.ingest.angle_unit))},
        {"rotate_180", cfg.ingest.rotate_180},
        {"planar", cfg.ingest.planar}}},
      {"warm_start", args.warm_start_dir},
      {"wall_seconds", wall},
      {"acceptance", acc},
      {"config", cfg.echo},
  };
  write_text(manifest_file(out_dir), manifest.dump(2) + "\n");
  return {{"out", out_dir}, {"stored_draws_per_chain", stored}, {"wall_seconds", wall}, {"diagnostics", diag}};
}

[[nodiscard]] inline IngestOptions ingest_from_manifest(const json& m) {
  IngestOptions o;
  if (!m.contains("ingest")) return o;
  const auto& i = m["ingest"];
  o.angle_unit = parse_angle_unit(i.value("angle_unit", std::string("auto")));
  o.rotate_180 = i.value("rotate_180", false);
  o.planar = i.value("planar", false);
  return o;
}

struct PredictArgs {
  std::string draws_dir;
  std::string data_path;  // empty: the path recorded in the manifest
  std::string targets_path;
  std::string out_dir;
  std::uint64_t seed = 1;
  bool write_samples = true;
};

/// Kriging from stored draws. Refuses a dataset whose checksum differs from the fit's.
inline json run_predict(const PredictArgs& args) {
  auto [draws, manifest] = load_draws(args.draws_dir);
  const std::string data_path = args.data_path.empty() ? manifest["dataset"].value("path", std::string{}) : args.data_path;
  if (data_path.empty()) throw ValidationError("no dataset given");
  if (args.targets_path.empty()) throw ValidationError("no targets file given (--targets)");
  const std::string sum = file_sha256(data_path);
  if (sum != manifest["dataset"].value("sha256", std::string{}))
    throw ValidationError("dataset '" + data_path + "' does not match the checksum recorded by the fit");
  const IngestOptions opts = ingest_from_manifest(manifest);
  const CircularDataset data = ingest(data_path, opts);
  const SiteSet targets = read_sites(args.targets_path, opts.planar);
  if (targets.temporal() != data.temporal())
    throw ValidationError("targets and data disagree on the presence of a time column");

  PredictionSet pred;
  try {
    pred = predict(draws, data, targets, PredictOptions{args.seed});
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  } catch (const std::out_of_range& e) {
    throw ValidationError(std::string("draw files do not match the model: ") + e.what());
  }
  if (pred.sample_count() == 0) throw NumericError("every posterior draw failed to factorize; no predictions");

  ensure_dir(args.out_dir);
  write_sites(detail::out_path(args.out_dir, "targets.csv"), targets);
  std::string tab = "site_id\tx\ty";
  if (targets.temporal()) tab += "\ttime";
  tab += "\tmean_direction\tresultant_length\tcircular_variance\tarc95_lo\tarc95_hi\n";
  for (std::size_t j = 0; j < pred.target_count(); ++j) {
    const auto& s = pred.summaries[j];
    std::vector<double> dev;
    dev.reserve(pred.sample_count());
    for (Eigen::Index i = 0; i < pred.samples.rows(); ++i)
      dev.push_back(Angle{pred.samples(i, static_cast<Eigen::Index>(j)) - s.mean_direction.value() + kPi}.value() - kPi);
    const auto [lo, hi] = detail::central_arc(std::move(dev), 0.95);
    tab += targets.ids[j] + "\t" + format_double(targets.coords[j].x) + "\t" + format_double(targets.coords[j].y);
    if (targets.temporal()) tab += "\t" + format_double(targets.times[j]);
    tab += "\t" + format_double(s.mean_direction.value()) + "\t" + format_double(s.resultant_length) + "\t" +
           format_double(s.variance) + "\t" + format_double((s.mean_direction + lo).value()) + "\t" +
           format_double((s.mean_direction + hi).value()) + "\n";
  }
  write_text(detail::out_path(args.out_dir, "predictions.tsv"), tab);
  if (args.write_samples) {
    DrawTable t;
    for (std::size_t j = 0; j < pred.target_count(); ++j) t.columns.push_back("target_" + std::to_string(j + 1));
    for (Eigen::Index i = 0; i < pred.samples.rows(); ++i) {
      std::vector<double> r(pred.target_count());
      for (std::size_t j = 0; j < r.size(); ++j) r[j] = pred.samples(i, static_cast<Eigen::Index>(j));
      t.rows.push_back(std::move(r));
    }
    write_draw_table(detail::out_path(args.out_dir, "samples.tsv"), t);
  }
  json pm{{"tool", "circspace"},
          {"version", kToolVersion},
          {"draws_dir", args.draws_dir},
          {"dataset", manifest["dataset"]},
          {"ingest", manifest.value("ingest", json::object())},
          {"targets", args.targets_path},
          {"n_targets", pred.target_count()},
          {"n_samples", pred.sample_count()},
          {"skipped", pred.skipped},
          {"skip_rate", pred.skip_rate()},
          {"seed", args.seed},
          {"samples_written", args.write_samples}};
  if (pred.skip_rate() > 0.01) pm["warning"] = "more than 1% of posterior draws were skipped";
  write_text(detail::out_path(args.out_dir, "prediction.json"), pm.dump(2) + "\n");
  return pm;
}

struct ScoreArgs {
  std::string predictions_dir;
  std::string truth_path;
  std::string out_dir;
  std::optional<IngestOptions> ingest;  // default: the options recorded with the fit
  double max_match_distance = std::numeric_limits<double>::infinity();
};

/// APE and circular CRPS of stored predictive samples against held-out truth,
/// matched to the nearest target.
inline json run_score(const ScoreArgs& args) {
  const json pm = read_json_file(detail::out_path(args.predictions_dir, "prediction.json"));
  if (!pm.value("samples_written", false)) throw ValidationError("the prediction run did not keep its samples");
  const IngestOptions opts = args.ingest ? *args.ingest : ingest_from_manifest(pm);
  const SiteSet targets = read_sites(detail::out_path(args.predictions_dir, "targets.csv"), true);
  const DrawTable samples = read_draw_table(detail::out_path(args.predictions_dir, "samples.tsv"));
  if (samples.columns.size() != targets.size()) throw ValidationError("samples.tsv and targets.csv disagree on target count");
  if (samples.rows.size() < 2) throw ValidationError("scoring needs at least two predictive samples");
  const CircularDataset truth = ingest(args.truth_path, opts);
  if (truth.temporal() != targets.temporal()) throw ValidationError("truth and targets disagree on the presence of a time column");

  PredictionSet pred;
  pred.targets = targets;
  pred.samples.resize(static_cast<Eigen::Index>(samples.rows.size()), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t i = 0; i < samples.rows.size(); ++i)
    for (std::size_t j = 0; j < targets.size(); ++j)
      pred.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples.rows[i][j];

  std::vector<std::size_t> match;
  try {
    match = match_nearest(targets, truth.sites, args.max_match_distance);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const ScoreReport rep = score(pred, truth.angles, match);

  ensure_dir(args.out_dir);
  std::string tab = "site_id\ttarget_id\tmatch_distance\tape\tcrps\tape_separation\tcrps_cosine\n";
  for (const auto& s : rep.per_site) {
    const auto& a = truth.sites.coords[s.truth_index];
    const auto& b = targets.coords[s.target_index];
    tab += truth.sites.ids[s.truth_index] + "\t" + targets.ids[s.target_index] + "\t" +
           format_double(std::hypot(a.x - b.x, a.y - b.y)) + "\t" + format_double(s.ape) + "\t" + format_double(s.crps) +
           "\t" + format_double(s.ape_separation) + "\t" + format_double(s.crps_cosine) + "\n";
  }
  write_text(detail::out_path(args.out_dir, "scores_per_site.tsv"), tab);
  json j{{"ape", rep.ape},
         {"crps", rep.crps},
         {"ape_separation", rep.ape_separation},
         {"crps_cosine", rep.crps_cosine},
         {"n_sites", rep.per_site.size()},
         {"n_samples", pred.sample_count()},
         {"conventions",
          {{"ape", "mean over samples of 1 - cos(sample - truth)"},
           {"crps", "ensemble CRPS with angular separation in radians"},
           {"ape_separation", "mean angular separation in radians"},
           {"crps_cosine", "ensemble CRPS with 1 - cos"}}}};
  write_text(detail::out_path(args.out_dir, "scores.json"), j.dump(2) + "\n");
  return j;
}

inline json run_diagnose(const std::string& draws_dir, const std::string& out_dir) {
  auto [draws, manifest] = load_draws(draws_dir);
  DiagnosticsReport rep;
  try {
    rep = diagnose(draws);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  const json j = detail::diagnostics_json(rep);
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    write_text(detail::out_path(out_dir, "diagnostics.json"), j.dump(2) + "\n");
  }
  return j;
}

/// Synthetic data from the configured generative settings: data.csv for
/// fitting, holdout.csv and holdout_sites.csv when n_holdout > 0, grid.csv when
/// a grid is requested, and truth.json with the generating parameters.
inline json run_simulate(const RunConfig& cfg, const std::string& out_dir_arg) {
  const std::string out_dir = out_dir_arg.empty() ? cfg.out_dir : out_dir_arg;
  const auto& s = cfg.simulate;
  Rng rng{cfg.seed};
  const SiteSet sites = random_sites(static_cast<std::size_t>(s.n_sites), s.width, s.height, rng, s.n_times);
  CorrelationSpec spec;
  SimulatedField field;
  try {
    spec = cfg.spec.with_sampled(s.corr);
    field = is_wrapped(cfg.model) ? simulate_wn(sites, spec, s.alpha, s.sigma2, rng)
                                  : simulate_pn(sites, spec, s.alpha_pn, s.sigma2, s.tau, rng);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("simulate: ") + e.what());
  } catch (const NotPositiveDefinite& e) {
    throw NumericError(std::string("simulate: ") + e.what());
  }

  // hold out the last n_holdout sites (at every time index)
  const auto cut = static_cast<std::size_t>(s.n_sites - s.n_holdout);
  CircularDataset train;
  CircularDataset hold;
  for (std::size_t i = 0; i < field.data.size(); ++i) {
    const std::size_t site = i % static_cast<std::size_t>(s.n_sites);
    auto& dst = site < cut ? train : hold;
    dst.sites.ids.push_back(field.data.sites.ids[i]);
    dst.sites.coords.push_back(field.data.sites.coords[i]);
    if (field.data.temporal()) dst.sites.times.push_back(field.data.sites.times[i]);
    dst.angles.push_back(field.data.angles[i]);
  }
  ensure_dir(out_dir);
  write_dataset(detail::out_path(out_dir, "data.csv"), train);
  if (hold.size()) {
    write_dataset(detail::out_path(out_dir, "holdout.csv"), hold);
    write_sites(detail::out_path(out_dir, "holdout_sites.csv"), hold.sites);
  }
  if (s.grid_nx > 0) {
    SiteSet g = grid_sites(s.grid_nx, s.grid_ny, s.width, s.height);
    write_sites(detail::out_path(out_dir, "grid.csv"), g);
  }
  json truth{{"model", model_name(cfg.model)},
             {"correlation", spec_to_json(spec)},
             {"sampled", spec.sampled_values()},
             {"sampled_names", spec.sampled_names()},
             {"sigma2", s.sigma2},
             {"seed", cfg.seed},
             {"n_train", train.size()},
             {"n_holdout", hold.size()}};
  if (is_wrapped(cfg.model)) truth["alpha"] = s.alpha;
  else {
    truth["alpha"] = {s.alpha_pn[0], s.alpha_pn[1]};
    truth["tau"] = s.tau;
  }
  write_text(detail::out_path(out_dir, "truth.json"), truth.dump(2) + "\n");
  return truth;
}

}  // namespace circspace::io
