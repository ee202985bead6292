#pragma once

#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "circspace/covkernel.hpp"
#include "circspace/io/csv.hpp"
#include "circspace/model_types.hpp"
#include "circspace/projected_model.hpp"
#include "circspace/wrapped_model.hpp"

extern char** environ;

namespace circspace::io {

using nlohmann::json;

inline constexpr const char* kEnvPrefix = "CIRCSPACE_";

enum class ModelName { wn_spatial, pn_spatial, wn_st, pn_st };

[[nodiscard]] inline std::string model_name(ModelName m) {
  switch (m) {
    case ModelName::wn_spatial: return "wn_spatial";
    case ModelName::pn_spatial: return "pn_spatial";
    case ModelName::wn_st: return "wn_st";
    case ModelName::pn_st: return "pn_st";
  }
  return "?";
}

[[nodiscard]] inline bool is_wrapped(ModelName m) { return m == ModelName::wn_spatial || m == ModelName::wn_st; }
[[nodiscard]] inline bool is_temporal(ModelName m) { return m == ModelName::wn_st || m == ModelName::pn_st; }

/// Generative settings for `simulate`.
struct SimulateSettings {
  int n_sites = 50;
  int n_holdout = 0;
  int n_times = 0;
  double width = 10.0;
  double height = 10.0;
  int grid_nx = 0;
  int grid_ny = 0;
  double alpha = 0.7853981633974483;                            // wrapped model
  Eigen::Vector2d alpha_pn = Eigen::Vector2d(1.0, 0.5);         // projected model
  double sigma2 = 0.5;
  double tau = 0.0;
  std::vector<double> corr;  // sampled correlation values in block order
};

struct RunConfig {
  ModelName model = ModelName::wn_spatial;
  CorrelationSpec spec;  // family, fixed nu, and placeholder sampled values
  WnPriors wn;
  PnPriors pn;
  McmcSchedule mcmc;
  AdaptSettings adapt;
  int chains = 2;
  std::uint64_t seed = 1;
  bool parallel = true;
  std::string data_path;
  IngestOptions ingest;
  std::string targets_path;
  std::string out_dir = "out";
  double max_match_distance = std::numeric_limits<double>::infinity();
  bool write_samples = true;
  SimulateSettings simulate;
  json echo;  // the effective configuration after overrides

  [[nodiscard]] FitOptions fit_options() const { return FitOptions{chains, seed, parallel}; }
};

namespace detail {

/// Every leaf key the configuration accepts, as JSON pointers. Environment
/// overrides are derived from this list.
inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "/model", "/seed", "/chains", "/parallel",
      "/correlation/family", "/correlation/nu",
      "/priors/alpha/mean", "/priors/alpha/var", "/priors/alpha/cov",
      "/priors/sigma2/shape", "/priors/sigma2/scale",
      "/priors/tau/lo", "/priors/tau/hi",
      "/priors/rho/lo", "/priors/rho/hi",
      "/priors/rho_sp/lo", "/priors/rho_sp/hi",
      "/priors/rho_t/lo", "/priors/rho_t/hi",
      "/priors/eta/a", "/priors/eta/b",
      "/mcmc/iters", "/mcmc/burnin", "/mcmc/thin",
      "/adapt/start", "/adapt/end", "/adapt/exp", "/adapt/accept_ratio", "/adapt/sd_prop", "/adapt/n_batch",
      "/adapt/radius_accept_ratio", "/adapt/radius_sd",
      "/data/path", "/data/angle_unit", "/data/rotate_180", "/data/planar",
      "/targets/path",
      "/output/dir", "/output/write_samples",
      "/score/max_match_distance",
      "/simulate/n_sites", "/simulate/n_holdout", "/simulate/n_times", "/simulate/width", "/simulate/height",
      "/simulate/grid", "/simulate/alpha", "/simulate/sigma2", "/simulate/tau", "/simulate/rho", "/simulate/rho_sp",
      "/simulate/rho_t", "/simulate/eta",
  };
  return keys;
}

inline std::string env_name(const std::string& pointer) {
  std::string s = kEnvPrefix;
  for (std::size_t i = 1; i < pointer.size(); ++i) {
    const char c = pointer[i];
    s += c == '/' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return s;
}

inline void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) collect_leaves(it.value(), prefix + "/" + it.key(), out);
  } else {
    out.push_back(prefix);
  }
}

/// Typed reads that record problems instead of throwing, so every error is
/// reported in one pass.
class Reader {
 public:
  Reader(const json& root, std::vector<std::string>& errors) : root_{root}, errors_{errors} {}

  [[nodiscard]] bool has(const std::string& ptr) const { return root_.contains(json::json_pointer(ptr)); }

  template <typename T>
  T get(const std::string& ptr, T fallback) {
    const json::json_pointer p(ptr);
    if (!root_.contains(p)) return fallback;
    try {
      return root_.at(p).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(key(ptr) + ": wrong type (" + root_.at(p).dump() + ")");
      return fallback;
    }
  }

  void error(const std::string& ptr, const std::string& msg) { errors_.push_back(key(ptr) + ": " + msg); }

  static std::string key(const std::string& ptr) {
    std::string s = ptr.substr(1);
    for (auto& c : s)
      if (c == '/') c = '.';
    return s;
  }

 private:
  const json& root_;
  std::vector<std::string>& errors_;
};

}  // namespace detail

/// Parse JSON text (comments allowed).
[[nodiscard]] inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ValidationError("cannot parse '" + origin + "': " + e.what());
  }
}

[[nodiscard]] inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_json_text(ss.str(), path);
}

/// Apply CIRCSPACE_* environment overrides. A value is read as JSON when it
/// parses as JSON and as a plain string otherwise. Unknown CIRCSPACE_ names are errors.
inline void apply_env_overrides(json& root, std::vector<std::string>& errors, char** env = environ) {
  std::vector<std::string> names;
  for (const auto& k : detail::known_keys()) names.push_back(detail::env_name(k));
  const std::string prefix = kEnvPrefix;
  for (char** e = env; e && *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    const std::string name = entry.substr(0, eq);
    const std::string value = eq == std::string::npos ? "" : entry.substr(eq + 1);
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
      errors.push_back("environment: unknown override " + name);
      continue;
    }
    const std::string& ptr = detail::known_keys()[static_cast<std::size_t>(it - names.begin())];
    json v;
    try {
      v = json::parse(value);
    } catch (const json::parse_error&) {
      v = value;
    }
    try {
      root[json::json_pointer(ptr)] = v;
    } catch (const json::exception&) {
      errors.push_back("environment: " + name + " conflicts with the configuration layout");
    }
  }
}

/// Build and validate a RunConfig, listing every problem before failing.
/// `for_fit` = false relaxes the keys only the sampler needs (decay priors),
/// for commands that read stored draws.
[[nodiscard]] inline RunConfig parse_config(json root, char** env = environ, bool for_fit = true) {
  std::vector<std::string> errors;
  if (!root.is_object()) throw ValidationError("configuration must be a JSON object");
  apply_env_overrides(root, errors, env);

  std::vector<std::string> leaves;
  detail::collect_leaves(root, "", leaves);
  const auto& known = detail::known_keys();
  for (const auto& l : leaves)
    if (std::find(known.begin(), known.end(), l) == known.end()) errors.push_back(detail::Reader::key(l) + ": unknown key");

  detail::Reader r(root, errors);
  RunConfig c;
  c.echo = root;

  const std::string model = r.get<std::string>("/model", "wn_spatial");
  if (model == "wn_spatial") c.model = ModelName::wn_spatial;
  else if (model == "pn_spatial") c.model = ModelName::pn_spatial;
  else if (model == "wn_st") c.model = ModelName::wn_st;
  else if (model == "pn_st") c.model = ModelName::pn_st;
  else r.error("/model", "must be one of wn_spatial, pn_spatial, wn_st, pn_st");
  const bool wrapped = is_wrapped(c.model);
  const bool temporal = is_temporal(c.model);

  const auto seed = r.get<std::int64_t>("/seed", 1);
  if (seed < 0) r.error("/seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(std::max<std::int64_t>(seed, 0));
  c.chains = r.get<int>("/chains", 2);
  if (c.chains < 1) r.error("/chains", "must be >= 1");
  c.parallel = r.get<bool>("/parallel", true);

  // correlation
  std::optional<Family> family;
  const std::string fam = r.get<std::string>("/correlation/family", temporal ? "gneiting" : "exponential");
  try {
    family = parse_family(fam);
  } catch (const std::invalid_argument& e) {
    r.error("/correlation/family", e.what());
  }
  const double nu = r.get<double>("/correlation/nu", 0.5);
  if (family) {
    if (temporal && *family != Family::gneiting)
      r.error("/correlation/family", "spatio-temporal models need the gneiting family");
    if (!temporal && *family == Family::gneiting)
      r.error("/correlation/family", "the gneiting family needs a spatio-temporal model (wn_st or pn_st)");
    if (*family != Family::matern && r.has("/correlation/nu")) r.error("/correlation/nu", "only used by the matern family");
    if (*family == Family::matern && !(nu > 0.0)) r.error("/correlation/nu", "must be > 0");
  }

  // priors
  auto uniform = [&](const std::string& name) -> std::optional<UniformPrior> {
    const std::string base = "/priors/" + name;
    if (!r.has(base + "/lo") || !r.has(base + "/hi")) {
      if (!for_fit && !r.has(base)) return std::nullopt;
      r.error(base, "uniform support {lo, hi} is required");
      return std::nullopt;
    }
    UniformPrior u{r.get<double>(base + "/lo", 0.0), r.get<double>(base + "/hi", 1.0)};
    if (!(u.lo < u.hi)) {
      r.error(base, "needs lo < hi");
      return std::nullopt;
    }
    if (!(u.lo >= 0.0)) {
      r.error(base, "decay support must be non-negative");
      return std::nullopt;
    }
    return u;
  };
  std::vector<UniformPrior> decay;
  const std::vector<std::string> decay_names =
      temporal ? std::vector<std::string>{"rho_sp", "rho_t"} : std::vector<std::string>{"rho"};
  for (const auto& n : decay_names)
    if (auto u = uniform(n)) decay.push_back(*u);
  for (const std::string other : {"rho", "rho_sp", "rho_t"})
    if (std::find(decay_names.begin(), decay_names.end(), other) == decay_names.end() && r.has("/priors/" + other))
      r.error("/priors/" + other, "not a parameter of the " + model_name(c.model) + " model");
  if (!temporal && r.has("/priors/eta")) r.error("/priors/eta", "only used by spatio-temporal models");
  if (wrapped && r.has("/priors/tau")) r.error("/priors/tau", "only used by projected models");

  InverseGamma ig = wrapped ? InverseGamma{3.0, 0.5} : InverseGamma{3.0, 2.0};
  ig.shape = r.get<double>("/priors/sigma2/shape", ig.shape);
  ig.scale = r.get<double>("/priors/sigma2/scale", ig.scale);
  if (!(ig.shape > 0.0 && ig.scale > 0.0)) r.error("/priors/sigma2", "shape and scale must be > 0");
  BetaPrior eta{r.get<double>("/priors/eta/a", 1.0), r.get<double>("/priors/eta/b", 1.0)};
  if (!(eta.a > 0.0 && eta.b > 0.0)) r.error("/priors/eta", "a and b must be > 0");

  c.wn.sigma2 = ig;
  c.pn.sigma2 = ig;
  c.wn.eta = eta;
  c.pn.eta = eta;
  c.wn.decay = decay;
  c.pn.decay = decay;
  if (wrapped) {
    if (r.has("/priors/alpha/cov")) r.error("/priors/alpha/cov", "the wrapped model takes alpha.var");
    c.wn.alpha.mean = r.get<double>("/priors/alpha/mean", kPi);
    c.wn.alpha.var = r.get<double>("/priors/alpha/var", 10.0);
    if (!(c.wn.alpha.var >= 0.0)) r.error("/priors/alpha/var", "must be >= 0");
  } else {
    if (r.has("/priors/alpha/var")) r.error("/priors/alpha/var", "the projected model takes a 2x2 alpha.cov");
    const auto m = r.get<std::vector<double>>("/priors/alpha/mean", {0.0, 0.0});
    const auto cv = r.get<std::vector<std::vector<double>>>("/priors/alpha/cov", {{10.0, 0.0}, {0.0, 10.0}});
    if (m.size() != 2) r.error("/priors/alpha/mean", "must have two entries");
    else c.pn.alpha.mean = Eigen::Vector2d(m[0], m[1]);
    if (cv.size() != 2 || cv[0].size() != 2 || cv[1].size() != 2) {
      r.error("/priors/alpha/cov", "must be a 2x2 array");
    } else {
      c.pn.alpha.cov << cv[0][0], cv[0][1], cv[1][0], cv[1][1];
      try {
        c.pn.alpha.validate();
      } catch (const std::invalid_argument& e) {
        r.error("/priors/alpha/cov", e.what());
      }
    }
    c.pn.tau = UniformPrior{r.get<double>("/priors/tau/lo", -1.0), r.get<double>("/priors/tau/hi", 1.0)};
    if (!(c.pn.tau.lo < c.pn.tau.hi && c.pn.tau.lo >= -1.0 && c.pn.tau.hi <= 1.0))
      r.error("/priors/tau", "support must satisfy -1 <= lo < hi <= 1");
  }

  // placeholder sampled values at the prior support midpoints
  if (family && decay.size() == decay_names.size()) {
    try {
      switch (*family) {
        case Family::matern: c.spec = CorrelationSpec{Matern{nu, std::max(decay[0].center(), 1e-12)}}; break;
        case Family::exponential: c.spec = CorrelationSpec{Exponential{std::max(decay[0].center(), 1e-12)}}; break;
        case Family::gaussian: c.spec = CorrelationSpec{GaussianKernel{std::max(decay[0].center(), 1e-12)}}; break;
        case Family::gneiting:
          if (decay.size() == 2)
            c.spec = CorrelationSpec{Gneiting{std::max(decay[0].center(), 1e-12), std::max(decay[1].center(), 1e-12), 0.5}};
          break;
      }
    } catch (const std::invalid_argument& e) {
      r.error("/correlation", e.what());
    }
  }

  // mcmc and adaptation
  c.mcmc.iters = r.get<std::int64_t>("/mcmc/iters", 20000);
  c.mcmc.burnin = r.get<std::int64_t>("/mcmc/burnin", c.mcmc.iters / 2);
  c.mcmc.thin = r.get<std::int64_t>("/mcmc/thin", 1);
  if (c.mcmc.iters < 1) r.error("/mcmc/iters", "must be >= 1");
  if (c.mcmc.burnin < 0 || c.mcmc.burnin >= c.mcmc.iters) r.error("/mcmc/burnin", "must satisfy 0 <= burnin < iters");
  if (c.mcmc.thin < 1) r.error("/mcmc/thin", "must be >= 1");
  if (c.mcmc.iters > c.mcmc.burnin && c.mcmc.thin >= 1 && c.mcmc.stored_count() < 1)
    r.error("/mcmc/thin", "leaves no stored draws after burn-in");

  // with no burn-in the default window is empty and nothing adapts
  c.adapt.window.start = r.get<std::int64_t>("/adapt/start", std::clamp<std::int64_t>(c.mcmc.burnin, 1, 100));
  c.adapt.window.end = r.get<std::int64_t>("/adapt/end", c.mcmc.burnin);
  if (c.adapt.window.start < 1) r.error("/adapt/start", "must be >= 1");
  if ((r.has("/adapt/start") || r.has("/adapt/end")) && c.adapt.window.end < c.adapt.window.start)
    r.error("/adapt/end", "must be >= adapt.start");
  if (c.adapt.window.end > c.mcmc.burnin) r.error("/adapt/end", "must not exceed mcmc.burnin");
  c.adapt.exponent = r.get<double>("/adapt/exp", 0.7);
  if (!(c.adapt.exponent > 0.0 && c.adapt.exponent < 1.0)) r.error("/adapt/exp", "must lie in (0, 1)");
  c.adapt.accept_ratio = r.get<double>("/adapt/accept_ratio", 0.234);
  if (!(c.adapt.accept_ratio > 0.0 && c.adapt.accept_ratio < 1.0)) r.error("/adapt/accept_ratio", "must lie in (0, 1)");
  c.adapt.radius_accept_ratio = r.get<double>("/adapt/radius_accept_ratio", 0.44);
  if (!(c.adapt.radius_accept_ratio > 0.0 && c.adapt.radius_accept_ratio < 1.0))
    r.error("/adapt/radius_accept_ratio", "must lie in (0, 1)");
  c.adapt.radius_sd = r.get<double>("/adapt/radius_sd", 0.5);
  if (!(c.adapt.radius_sd > 0.0)) r.error("/adapt/radius_sd", "must be > 0");
  c.adapt.n_batch = r.get<int>("/adapt/n_batch", 50);
  if (c.adapt.n_batch < 1) r.error("/adapt/n_batch", "must be >= 1");
  c.adapt.sd_prop = r.get<std::vector<double>>("/adapt/sd_prop", {});
  const std::size_t block_size = 1 + (wrapped ? 0 : 1) + (temporal ? 3 : 1);
  if (!c.adapt.sd_prop.empty()) {
    if (c.adapt.sd_prop.size() != block_size)
      r.error("/adapt/sd_prop", "needs " + std::to_string(block_size) + " entries (sigma2" + (wrapped ? "" : ", tau") +
                                    (temporal ? ", rho_sp, rho_t, eta)" : ", rho)"));
    for (double v : c.adapt.sd_prop)
      if (!(v > 0.0)) {
        r.error("/adapt/sd_prop", "entries must be > 0");
        break;
      }
  }

  // paths and I/O options
  c.data_path = r.get<std::string>("/data/path", "");
  try {
    c.ingest.angle_unit = parse_angle_unit(r.get<std::string>("/data/angle_unit", ""));
  } catch (const ValidationError& e) {
    r.error("/data/angle_unit", e.what());
  }
  c.ingest.rotate_180 = r.get<bool>("/data/rotate_180", false);
  c.ingest.planar = r.get<bool>("/data/planar", false);
  c.targets_path = r.get<std::string>("/targets/path", "");
  c.out_dir = r.get<std::string>("/output/dir", "out");
  c.write_samples = r.get<bool>("/output/write_samples", true);
  c.max_match_distance = r.get<double>("/score/max_match_distance", std::numeric_limits<double>::infinity());
  if (!(c.max_match_distance >= 0.0)) r.error("/score/max_match_distance", "must be >= 0");

  // simulate
  auto& s = c.simulate;
  s.n_sites = r.get<int>("/simulate/n_sites", s.n_sites);
  s.n_holdout = r.get<int>("/simulate/n_holdout", s.n_holdout);
  s.n_times = r.get<int>("/simulate/n_times", temporal ? 4 : 0);
  s.width = r.get<double>("/simulate/width", s.width);
  s.height = r.get<double>("/simulate/height", s.height);
  if (s.n_sites < 1) r.error("/simulate/n_sites", "must be >= 1");
  if (s.n_holdout < 0 || s.n_holdout >= s.n_sites) r.error("/simulate/n_holdout", "must satisfy 0 <= n_holdout < n_sites");
  if (temporal && s.n_times < 1) r.error("/simulate/n_times", "spatio-temporal models need n_times >= 1");
  if (!temporal && s.n_times != 0) r.error("/simulate/n_times", "only used by spatio-temporal models");
  if (!(s.width > 0.0 && s.height > 0.0)) r.error("/simulate", "width and height must be > 0");
  const auto grid = r.get<std::vector<int>>("/simulate/grid", {});
  if (!grid.empty()) {
    if (grid.size() != 2 || grid[0] < 1 || grid[1] < 1) r.error("/simulate/grid", "must be [nx, ny] with both >= 1");
    else {
      s.grid_nx = grid[0];
      s.grid_ny = grid[1];
    }
  }
  if (wrapped) {
    s.alpha = r.get<double>("/simulate/alpha", s.alpha);
  } else {
    const auto a = r.get<std::vector<double>>("/simulate/alpha", {s.alpha_pn[0], s.alpha_pn[1]});
    if (a.size() != 2) r.error("/simulate/alpha", "projected models take a 2-vector");
    else s.alpha_pn = Eigen::Vector2d(a[0], a[1]);
  }
  s.sigma2 = r.get<double>("/simulate/sigma2", s.sigma2);
  if (!(s.sigma2 > 0.0)) r.error("/simulate/sigma2", "must be > 0");
  s.tau = r.get<double>("/simulate/tau", s.tau);
  if (!(s.tau > -1.0 && s.tau < 1.0)) r.error("/simulate/tau", "must lie in (-1, 1)");
  if (temporal) {
    s.corr = {r.get<double>("/simulate/rho_sp", 0.5), r.get<double>("/simulate/rho_t", 0.5), r.get<double>("/simulate/eta", 0.5)};
  } else {
    s.corr = {r.get<double>("/simulate/rho", 0.5)};
  }

  if (!errors.empty()) throw ValidationError("invalid configuration:", errors);
  c.echo = root;
  return c;
}

[[nodiscard]] inline RunConfig load_config(const std::string& path, char** env = environ) {
  return parse_config(read_json_file(path), env);
}

}  // namespace circspace::io
