#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <sstream>
#include <thread>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "circspace/adapt_mcmc.hpp"
#include "circspace/circ_core.hpp"
#include "circspace/covkernel.hpp"
#include "circspace/priors.hpp"

namespace circspace {

/// Locations (planar coordinates, optional time index) without observations.
struct SiteSet {
  std::vector<std::string> ids;
  std::vector<Coord> coords;
  std::vector<double> times;  // empty when purely spatial

  [[nodiscard]] std::size_t size() const noexcept { return coords.size(); }
  [[nodiscard]] bool temporal() const noexcept { return !times.empty(); }
  [[nodiscard]] double time(std::size_t i) const { return temporal() ? times[i] : 0.0; }
  [[nodiscard]] DistanceMatrix distances() const { return distance_matrix(coords, times); }

  void validate() const {
    if (!ids.empty() && ids.size() != coords.size()) throw std::invalid_argument("site ids and coordinates differ in length");
    if (temporal() && times.size() != coords.size()) throw std::invalid_argument("site times and coordinates differ in length");
  }
};

/// Sites paired with observed directions.
struct CircularDataset {
  SiteSet sites;
  std::vector<Angle> angles;
  std::vector<double> speed;  // optional, carried through untouched

  [[nodiscard]] std::size_t size() const noexcept { return angles.size(); }
  [[nodiscard]] bool temporal() const noexcept { return sites.temporal(); }

  void validate() const {
    sites.validate();
    if (angles.empty()) throw std::invalid_argument("dataset is empty");
    if (angles.size() != sites.size()) throw std::invalid_argument("dataset angles and sites differ in length");
    if (!speed.empty() && speed.size() != angles.size()) throw std::invalid_argument("dataset speed column has wrong length");
  }
};

/// Planar and temporal distances between two site sets (rows: a, cols: b).
struct CrossDistances {
  Eigen::MatrixXd space;
  Eigen::MatrixXd time;  // empty when spatial

  [[nodiscard]] const Eigen::MatrixXd* time_ptr() const noexcept { return time.size() ? &time : nullptr; }
};

[[nodiscard]] inline CrossDistances cross_distances(const SiteSet& a, const SiteSet& b) {
  if (a.temporal() != b.temporal()) throw std::invalid_argument("cannot mix spatial and spatio-temporal site sets");
  const auto n = static_cast<Eigen::Index>(a.size());
  const auto m = static_cast<Eigen::Index>(b.size());
  CrossDistances d;
  d.space.resize(n, m);
  if (a.temporal()) d.time.resize(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& q = b.coords[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& p = a.coords[static_cast<std::size_t>(i)];
      d.space(i, j) = std::hypot(p.x - q.x, p.y - q.y);
      if (a.temporal()) d.time(i, j) = std::abs(a.times[static_cast<std::size_t>(i)] - b.times[static_cast<std::size_t>(j)]);
    }
  }
  return d;
}

struct McmcSchedule {
  std::int64_t iters = 1000;
  std::int64_t burnin = 500;
  std::int64_t thin = 1;

  void validate() const {
    if (iters < 1) throw std::invalid_argument("mcmc.iters must be >= 1");
    if (burnin < 0 || burnin >= iters) throw std::invalid_argument("mcmc.burnin must satisfy 0 <= burnin < iters");
    if (thin < 1) throw std::invalid_argument("mcmc.thin must be >= 1");
  }
  [[nodiscard]] std::int64_t stored_count() const noexcept { return (iters - burnin) / thin; }
  /// `step` counts iterations of this run starting at 1.
  [[nodiscard]] bool keep(std::int64_t step) const noexcept { return step > burnin && (step - burnin) % thin == 0; }
};

struct AdaptSettings {
  AdaptSchedule window;
  double exponent = 0.7;
  double accept_ratio = 0.234;
  std::vector<double> sd_prop;  // empty: 0.1 for every block entry
  int n_batch = 50;
  double radius_accept_ratio = 0.44;
  double radius_sd = 0.5;
};

/// Rows of stored draws with named columns.
struct DrawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const {
    auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw std::out_of_range("draw table has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  }
  [[nodiscard]] bool has_column(const std::string& name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
  }
  [[nodiscard]] std::vector<double> series(const std::string& name) const {
    const auto c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

/// One entry of the jointly updated covariance-parameter block.
struct BlockParam {
  std::string name;
  ParamTransform transform;
  ScalarPrior prior;
};

[[nodiscard]] inline Eigen::VectorXd block_to_constrained(const std::vector<BlockParam>& block, const Eigen::VectorXd& x) {
  Eigen::VectorXd t(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) t[i] = block[static_cast<std::size_t>(i)].transform.to_constrained(x[i]);
  return t;
}

[[nodiscard]] inline Eigen::VectorXd block_to_unconstrained(const std::vector<BlockParam>& block, const Eigen::VectorXd& t) {
  Eigen::VectorXd x(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i) x[i] = block[static_cast<std::size_t>(i)].transform.to_unconstrained(t[i]);
  return x;
}

/// Prior density of the constrained values plus the transform Jacobian, or -inf
/// when any value leaves its support.
[[nodiscard]] inline double block_log_prior_jacobian(const std::vector<BlockParam>& block, const Eigen::VectorXd& x,
                                                     const Eigen::VectorXd& t) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const auto& p = block[static_cast<std::size_t>(i)];
    if (p.transform.kind() == ParamTransform::Kind::logit_interval &&
        !(t[i] > p.transform.lower() && t[i] < p.transform.upper()))
      return kNegInf;
    if (p.transform.kind() == ParamTransform::Kind::log_positive && !(t[i] > 0.0 && std::isfinite(t[i]))) return kNegInf;
    const double l = log_prior(p.prior, t[i]);
    if (!std::isfinite(l)) return kNegInf;
    lp += l + p.transform.log_jacobian(x[i]);
  }
  return lp;
}

/// Acceptance probability from a log MH ratio.
[[nodiscard]] inline double mh_probability(double log_ratio) noexcept {
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

[[nodiscard]] inline bool mh_accept(double log_ratio, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(u(rng)) < log_ratio;
}

struct ChainStats {
  std::int64_t block_proposals = 0;
  std::int64_t block_accepts = 0;
  std::int64_t latent_proposals = 0;
  std::int64_t latent_accepts = 0;

  [[nodiscard]] double block_rate() const {
    return block_proposals ? static_cast<double>(block_accepts) / static_cast<double>(block_proposals) : 0.0;
  }
  [[nodiscard]] double latent_rate() const {
    return latent_proposals ? static_cast<double>(latent_accepts) / static_cast<double>(latent_proposals) : 0.0;
  }
};

enum class ModelKind { wn, pn };

/// Stored draws of every chain plus what prediction needs to rebuild the model.
struct PosteriorDraws {
  ModelKind kind = ModelKind::wn;
  CorrelationSpec spec;  // family and fixed parameters; sampled values come from the draws
  double shift = 0.0;    // rotation applied to the data before fitting (wrapped model)
  std::vector<DrawTable> chains;
  std::vector<ChainStats> stats;

  [[nodiscard]] std::size_t total_draws() const {
    std::size_t n = 0;
    for (const auto& c : chains) n += c.rows.size();
    return n;
  }
};

template <typename State>
struct FitResult {
  PosteriorDraws draws;
  std::vector<State> end_states;
};

[[nodiscard]] inline std::string rng_state_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void restore_rng(Rng& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::invalid_argument("cannot restore random generator state");
}

/// Run `n_chains` independent chains, chain c seeded with seed + c. Chains run
/// on separate threads when `parallel` is set; results do not depend on it.
template <typename Body>
void for_each_chain(int n_chains, bool parallel, Body&& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_chains));
  auto guarded = [&](int c) {
    try {
      body(c);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (parallel && n_chains > 1) {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_chains));
    for (int c = 0; c < n_chains; ++c) pool.emplace_back(guarded, c);
    for (auto& t : pool) t.join();
  } else {
    for (int c = 0; c < n_chains; ++c) guarded(c);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct FitOptions {
  int n_chains = 2;
  std::uint64_t seed = 1;
  bool parallel = true;
};

/// Iteration loop shared by both samplers. `sampler.sweep(rng, b)` advances one
/// iteration at global number b; kept draws are appended through `sampler.row()`.
template <typename Sampler>
DrawTable run_chain(Sampler& sampler, const McmcSchedule& schedule, Rng& rng) {
  DrawTable table;
  table.columns = sampler.columns();
  table.rows.reserve(static_cast<std::size_t>(schedule.stored_count()));
  const std::int64_t first = sampler.iteration();
  for (std::int64_t step = 1; step <= schedule.iters; ++step) {
    sampler.sweep(rng, first + step);
    if (schedule.keep(step)) table.rows.push_back(sampler.row());
  }
  return table;
}

}  // namespace circspace
