#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "circspace/circ_core.hpp"
#include "circspace/covkernel.hpp"
#include "circspace/gauss_core.hpp"
#include "circspace/model_types.hpp"

namespace circspace {

/// Posterior predictive angles: one row per retained posterior draw, one
/// column per target.
struct PredictionSet {
  SiteSet targets;
  Eigen::MatrixXd samples;  // radians in [0, 2pi)
  std::vector<CircularSummary> summaries;
  std::size_t skipped = 0;  // draws whose covariance could not be factorized

  [[nodiscard]] std::size_t sample_count() const noexcept { return static_cast<std::size_t>(samples.rows()); }
  [[nodiscard]] std::size_t target_count() const noexcept { return static_cast<std::size_t>(samples.cols()); }
  [[nodiscard]] double skip_rate() const noexcept {
    const auto total = sample_count() + skipped;
    return total ? static_cast<double>(skipped) / static_cast<double>(total) : 0.0;
  }
  [[nodiscard]] std::vector<Angle> target_samples(std::size_t j) const {
    std::vector<Angle> out;
    out.reserve(sample_count());
    for (Eigen::Index s = 0; s < samples.rows(); ++s) out.emplace_back(samples(s, static_cast<Eigen::Index>(j)));
    return out;
  }
};

struct PredictOptions {
  std::uint64_t seed = 1;
};

namespace detail {

inline void summarize(PredictionSet& out) {
  out.summaries.clear();
  if (out.samples.rows() == 0) return;
  for (std::size_t j = 0; j < out.target_count(); ++j) out.summaries.push_back(circular_summary(out.target_samples(j)));
}

inline CorrelationSpec spec_from_row(const CorrelationSpec& base, const DrawTable& table, const std::vector<double>& row) {
  std::vector<double> v;
  for (const auto& name : base.sampled_names()) v.push_back(row[table.column(name)]);
  return base.with_sampled(v);
}

}  // namespace detail

/// Kriging under the wrapped model. For each draw the linear field
/// theta + 2 pi k is conditioned on, each target is drawn from its conditional
/// normal and wrapped back onto the original scale.
[[nodiscard]] inline PredictionSet predict_wn(const PosteriorDraws& draws, const CircularDataset& data,
                                              const SiteSet& targets, const PredictOptions& opts = {}) {
  if (draws.kind != ModelKind::wn) throw std::invalid_argument("predict_wn needs wrapped-normal draws");
  data.validate();
  targets.validate();
  if (targets.size() == 0) throw std::invalid_argument("no prediction targets");
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto m = static_cast<Eigen::Index>(targets.size());
  const DistanceMatrix d_oo = data.sites.distances();
  const CrossDistances d_ou = cross_distances(data.sites, targets);

  Eigen::VectorXd theta_c(n);
  for (Eigen::Index i = 0; i < n; ++i) theta_c[i] = Angle{data.angles[static_cast<std::size_t>(i)].value() + draws.shift}.value();

  PredictionSet out;
  out.targets = targets;
  out.samples.resize(static_cast<Eigen::Index>(draws.total_draws()), m);
  Rng rng{opts.seed};
  std::normal_distribution<double> z;
  Eigen::Index row = 0;
  for (const auto& table : draws.chains) {
    const auto c_alpha = table.column("alpha_lin");
    const auto c_sigma2 = table.column("sigma2");
    const auto c_k1 = table.column("k_1");
    for (const auto& r : table.rows) {
      const CorrelationSpec spec = detail::spec_from_row(draws.spec, table, r);
      const double sigma2 = r[c_sigma2];
      const double alpha = r[c_alpha];
      const auto f = try_factorize(sigma2 * correlation_matrix(spec, d_oo));
      if (!f) {
        ++out.skipped;
        continue;
      }
      Eigen::VectorXd resid(n);
      for (Eigen::Index i = 0; i < n; ++i) resid[i] = theta_c[i] + kTwoPi * r[c_k1 + static_cast<std::size_t>(i)] - alpha;
      const Eigen::VectorXd w = f->whiten(resid);
      const Eigen::MatrixXd cross = sigma2 * cross_correlation(spec, d_ou.space, d_ou.time_ptr());
      const Eigen::MatrixXd v = f->whiten(cross);
      const Eigen::VectorXd mean = (v.transpose() * w).array() + alpha;
      const Eigen::VectorXd var = (sigma2 - v.colwise().squaredNorm().array()).cwiseMax(0.0);
      for (Eigen::Index j = 0; j < m; ++j) {
        const double y = mean[j] + std::sqrt(var[j]) * z(rng);
        out.samples(row, j) = Angle{y - draws.shift}.value();
      }
      ++row;
    }
  }
  out.samples.conservativeResize(row, m);
  detail::summarize(out);
  return out;
}

/// Kriging under the projected model: the bivariate field at each target is
/// drawn from its conditional normal and mapped to an angle with atan_star.
[[nodiscard]] inline PredictionSet predict_pn(const PosteriorDraws& draws, const CircularDataset& data,
                                              const SiteSet& targets, const PredictOptions& opts = {}) {
  if (draws.kind != ModelKind::pn) throw std::invalid_argument("predict_pn needs projected-normal draws");
  data.validate();
  targets.validate();
  if (targets.size() == 0) throw std::invalid_argument("no prediction targets");
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto m = static_cast<Eigen::Index>(targets.size());
  const DistanceMatrix d_oo = data.sites.distances();
  const CrossDistances d_ou = cross_distances(data.sites, targets);

  PredictionSet out;
  out.targets = targets;
  out.samples.resize(static_cast<Eigen::Index>(draws.total_draws()), m);
  Rng rng{opts.seed};
  std::normal_distribution<double> z;
  Eigen::Index row = 0;
  for (const auto& table : draws.chains) {
    const auto c_a1 = table.column("alpha1");
    const auto c_a2 = table.column("alpha2");
    const auto c_sigma2 = table.column("sigma2");
    const auto c_tau = table.column("tau");
    const auto c_r1 = table.column("r_1");
    for (const auto& r : table.rows) {
      const CorrelationSpec spec = detail::spec_from_row(draws.spec, table, r);
      const Eigen::Vector2d alpha(r[c_a1], r[c_a2]);
      std::optional<CrossCovarianceScale> xi;
      try {
        xi = CrossCovarianceScale::bivariate(r[c_sigma2], r[c_tau]);
      } catch (const std::invalid_argument&) {
        ++out.skipped;
        continue;
      }
      const auto f = try_factorize(kronecker_xi(correlation_matrix(spec, d_oo), *xi));
      if (!f) {
        ++out.skipped;
        continue;
      }
      Eigen::VectorXd resid(2 * n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double t = data.angles[static_cast<std::size_t>(i)].value();
        const double rad = r[c_r1 + static_cast<std::size_t>(i)];
        resid[2 * i] = rad * std::cos(t) - alpha[0];
        resid[2 * i + 1] = rad * std::sin(t) - alpha[1];
      }
      const Eigen::VectorXd w = f->whiten(resid);
      const Eigen::MatrixXd cross = kronecker_xi(cross_correlation(spec, d_ou.space, d_ou.time_ptr()), *xi);
      const Eigen::MatrixXd v = f->whiten(cross);
      const Eigen::VectorXd mean = v.transpose() * w;
      const Eigen::Matrix2d x = xi->matrix();
      for (Eigen::Index j = 0; j < m; ++j) {
        const auto vj = v.middleCols<2>(2 * j);
        Eigen::Matrix2d cov = x - vj.transpose() * vj;
        // 2x2 square root that tolerates a numerically singular conditional
        const double l11 = std::sqrt(std::max(cov(0, 0), 0.0));
        const double l21 = l11 > 0.0 ? cov(1, 0) / l11 : 0.0;
        const double l22 = std::sqrt(std::max(cov(1, 1) - l21 * l21, 0.0));
        const double e1 = z(rng);
        const double e2 = z(rng);
        const double y1 = alpha[0] + mean[2 * j] + l11 * e1;
        const double y2 = alpha[1] + mean[2 * j + 1] + l21 * e1 + l22 * e2;
        out.samples(row, j) = (y1 == 0.0 && y2 == 0.0) ? 0.0 : atan_star(y1, y2).value();
      }
      ++row;
    }
  }
  out.samples.conservativeResize(row, m);
  detail::summarize(out);
  return out;
}

[[nodiscard]] inline PredictionSet predict(const PosteriorDraws& draws, const CircularDataset& data, const SiteSet& targets,
                                           const PredictOptions& opts = {}) {
  return draws.kind == ModelKind::wn ? predict_wn(draws, data, targets, opts) : predict_pn(draws, data, targets, opts);
}

/// Mean of 1 - cos(sample - truth) over the predictive samples.
[[nodiscard]] inline double ape_site(std::span<const Angle> samples, Angle truth) {
  if (samples.empty()) throw std::invalid_argument("ape: no predictive samples");
  double s = 0.0;
  for (Angle a : samples) s += circular_distance(a, truth);
  return s / static_cast<double>(samples.size());
}

/// Mean angular separation between the predictive samples and the truth.
[[nodiscard]] inline double mean_separation(std::span<const Angle> samples, Angle truth) {
  if (samples.empty()) throw std::invalid_argument("mean_separation: no predictive samples");
  double s = 0.0;
  for (Angle a : samples) s += angular_separation(a, truth);
  return s / static_cast<double>(samples.size());
}

/// Sum over all ordered pairs (i, j) of the angular separation, O(N log N).
[[nodiscard]] inline double pairwise_separation_sum(std::span<const Angle> samples) {
  std::vector<double> a;
  a.reserve(samples.size());
  for (Angle x : samples) a.push_back(x.value());
  std::sort(a.begin(), a.end());
  const std::size_t n = a.size();
  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + a[i];
  double total = 0.0;
  std::size_t hi = 0;  // last index with a[hi] - a[i] <= pi
  for (std::size_t i = 0; i < n; ++i) {
    if (hi < i) hi = i;
    while (hi + 1 < n && a[hi + 1] - a[i] <= kPi) ++hi;
    const double near_cnt = static_cast<double>(hi - i);
    const double far_cnt = static_cast<double>(n - 1 - hi);
    const double near = (prefix[hi + 1] - prefix[i + 1]) - near_cnt * a[i];
    const double far = far_cnt * (kTwoPi + a[i]) - (prefix[n] - prefix[hi + 1]);
    total += near + far;
  }
  return 2.0 * total;
}

/// Ensemble circular CRPS: E d(X, truth) - 1/2 E d(X, X'), d the angular
/// separation, the pair term averaged over all ordered pairs.
[[nodiscard]] inline double crps_circular(std::span<const Angle> samples, Angle truth) {
  if (samples.size() < 2) throw std::invalid_argument("crps_circular: needs at least two samples");
  const auto n = static_cast<double>(samples.size());
  const double pair = pairwise_separation_sum(samples) / (n * n);
  return std::max(0.0, mean_separation(samples, truth) - 0.5 * pair);
}

/// The same ensemble estimator with d = 1 - cos. Its pair term reduces to the
/// squared mean resultant length.
[[nodiscard]] inline double crps_cosine(std::span<const Angle> samples, Angle truth) {
  if (samples.size() < 2) throw std::invalid_argument("crps_cosine: needs at least two samples");
  double c = 0.0;
  double s = 0.0;
  for (Angle a : samples) {
    c += std::cos(a.value());
    s += std::sin(a.value());
  }
  const auto n = static_cast<double>(samples.size());
  const double r2 = (c * c + s * s) / (n * n);
  return std::max(0.0, ape_site(samples, truth) - 0.5 * (1.0 - r2));
}

struct SiteScore {
  std::size_t truth_index = 0;
  std::size_t target_index = 0;
  double ape = 0.0;            // 1 - cos
  double crps = 0.0;           // angular separation
  double ape_separation = 0.0;  // mean angular separation (radians)
  double crps_cosine = 0.0;    // 1 - cos
};

struct ScoreReport {
  double ape = 0.0;
  double crps = 0.0;
  double ape_separation = 0.0;
  double crps_cosine = 0.0;
  std::vector<SiteScore> per_site;
};

/// Scores for truth values paired with targets through `target_of_truth`.
[[nodiscard]] inline ScoreReport score(const PredictionSet& pred, std::span<const Angle> truth,
                                       std::span<const std::size_t> target_of_truth) {
  if (truth.size() != target_of_truth.size()) throw std::invalid_argument("score: truth and matching differ in length");
  if (truth.empty()) throw std::invalid_argument("score: no truth values");
  ScoreReport rep;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto j = target_of_truth[i];
    if (j >= pred.target_count()) throw std::out_of_range("score: target index out of range");
    const auto s = pred.target_samples(j);
    SiteScore site{i, j, ape_site(s, truth[i]), crps_circular(s, truth[i]), mean_separation(s, truth[i]),
                   crps_cosine(s, truth[i])};
    rep.per_site.push_back(site);
  }
  const auto n = static_cast<double>(rep.per_site.size());
  for (const auto& s : rep.per_site) {
    rep.ape += s.ape;
    rep.crps += s.crps;
    rep.ape_separation += s.ape_separation;
    rep.crps_cosine += s.crps_cosine;
  }
  rep.ape /= n;
  rep.crps /= n;
  rep.ape_separation /= n;
  rep.crps_cosine /= n;
  return rep;
}

/// Truth aligned one-to-one with the prediction targets.
[[nodiscard]] inline ScoreReport ape(const PredictionSet& pred, std::span<const Angle> truth) {
  if (truth.size() != pred.target_count()) throw std::invalid_argument("ape: truth must align with the targets");
  std::vector<std::size_t> idx(truth.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return score(pred, truth, idx);
}

/// For every truth site, the nearest target (planar distance, same time index
/// when temporal; ties go to the lowest target index). Throws listing every
/// truth site whose nearest target lies beyond `max_distance`.
[[nodiscard]] inline std::vector<std::size_t> match_nearest(const SiteSet& targets, const SiteSet& truth,
                                                            double max_distance = std::numeric_limits<double>::infinity()) {
  std::vector<std::size_t> out;
  std::string offenders;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < targets.size(); ++j) {
      if (truth.temporal() && targets.temporal() && truth.times[i] != targets.times[j]) continue;
      const double d = std::hypot(truth.coords[i].x - targets.coords[j].x, truth.coords[i].y - targets.coords[j].y);
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    if (!(best <= max_distance)) {
      const std::string id = truth.ids.empty() ? std::to_string(i + 1) : truth.ids[i];
      offenders += (offenders.empty() ? "" : ", ") + id;
    }
    out.push_back(best_j);
  }
  if (!offenders.empty()) throw std::invalid_argument("no prediction target within the matching distance for site(s): " + offenders);
  return out;
}

}  // namespace circspace
