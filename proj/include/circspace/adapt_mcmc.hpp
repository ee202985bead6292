#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "circspace/gauss_core.hpp"

namespace circspace {

/// Bijection between an unconstrained real and a constrained parameter.
class ParamTransform {
 public:
  enum class Kind { log_positive, logit_interval };

  static ParamTransform log_positive() { return ParamTransform{Kind::log_positive, 0.0, 0.0}; }
  static ParamTransform logit_interval(double a, double b) {
    if (!(a < b)) throw std::invalid_argument("logit_interval needs a < b");
    return ParamTransform{Kind::logit_interval, a, b};
  }

  [[nodiscard]] Kind kind() const noexcept { return kind_; }
  [[nodiscard]] double lower() const noexcept { return a_; }
  [[nodiscard]] double upper() const noexcept { return b_; }

  /// exp(x), or (a + b e^x) / (1 + e^x) evaluated as a + (b - a) * logistic(x).
  [[nodiscard]] double to_constrained(double x) const {
    if (kind_ == Kind::log_positive) return std::exp(x);
    return a_ + (b_ - a_) * logistic(x);
  }

  [[nodiscard]] double to_unconstrained(double t) const {
    if (kind_ == Kind::log_positive) {
      if (!(t > 0.0)) throw std::domain_error("log_positive transform needs t > 0");
      return std::log(t);
    }
    if (!(t > a_ && t < b_)) throw std::domain_error("logit_interval transform needs a < t < b");
    return std::log((t - a_) / (b_ - t));
  }

  /// log |d to_constrained / dx|
  [[nodiscard]] double log_jacobian(double x) const {
    if (kind_ == Kind::log_positive) return x;
    return std::log(b_ - a_) - softplus(x) - softplus(-x);
  }

 private:
  ParamTransform(Kind k, double a, double b) : kind_{k}, a_{a}, b_{b} {}

  static double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }
  static double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

  Kind kind_;
  double a_;
  double b_;
};

/// Adaptation window [start, end] in global iteration numbers.
struct AdaptSchedule {
  std::int64_t start = 100;
  std::int64_t end = 10000;

  [[nodiscard]] bool active(std::int64_t b) const noexcept { return start <= b && b <= end; }
};

[[nodiscard]] inline bool adaptation_window(const AdaptSchedule& s, std::int64_t b) noexcept { return s.active(b); }

inline constexpr double kProposalJitter = 0.0001;

/// State of the multivariate adaptive proposal for the covariance-parameter block.
struct BlockAdaptState {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  double lambda = 1.0;
  double xi = 0.7;
  double target = 0.234;
  std::int64_t iteration = 1;

  static BlockAdaptState init(const Eigen::VectorXd& x0, std::span<const double> sd_prop, double xi, double target,
                              std::int64_t first_iteration) {
    if (static_cast<Eigen::Index>(sd_prop.size()) != x0.size())
      throw std::invalid_argument("sd_prop length does not match the number of covariance parameters");
    if (!(xi > 0.0 && xi < 1.0)) throw std::invalid_argument("adapt exponent must lie in (0, 1)");
    if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("adapt accept_ratio must lie in (0, 1)");
    BlockAdaptState s;
    s.mu = x0;
    s.sigma = Eigen::MatrixXd::Zero(x0.size(), x0.size());
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
      if (!(sd_prop[static_cast<std::size_t>(i)] > 0.0)) throw std::invalid_argument("sd_prop entries must be > 0");
      s.sigma(i, i) = sd_prop[static_cast<std::size_t>(i)];
    }
    s.xi = xi;
    s.target = target;
    s.iteration = std::max<std::int64_t>(1, first_iteration);
    return s;
  }

  [[nodiscard]] Eigen::MatrixXd proposal_covariance() const {
    return lambda * sigma + kProposalJitter * Eigen::MatrixXd::Identity(sigma.rows(), sigma.cols());
  }
};

/// Random-walk draw around the current unconstrained point with covariance
/// lambda * Sigma + 0.0001 I.
[[nodiscard]] inline Eigen::VectorXd block_propose(const BlockAdaptState& state, const Eigen::VectorXd& current_x,
                                                   Rng& rng) {
  Eigen::LLT<Eigen::MatrixXd> llt(state.proposal_covariance());
  if (llt.info() != Eigen::Success) throw std::logic_error("block_propose: proposal covariance not positive definite");
  return current_x + llt.matrixL() * standard_normal(current_x.size(), rng);
}

/// One step of the three Robbins-Monro recursions on (lambda, mu, Sigma).
[[nodiscard]] inline BlockAdaptState block_update(BlockAdaptState state, const Eigen::VectorXd& x_star, double alpha_mh) {
  if (!(alpha_mh >= 0.0 && alpha_mh <= 1.0)) throw std::invalid_argument("block_update: alpha_mh must lie in [0, 1]");
  const double gamma = std::pow(static_cast<double>(state.iteration), -state.xi);
  const Eigen::VectorXd diff = x_star - state.mu;
  state.lambda = std::exp(std::log(state.lambda) + gamma * (alpha_mh - state.target));
  state.mu += gamma * diff;
  state.sigma += gamma * (diff * diff.transpose() - state.sigma);
  state.sigma = 0.5 * (state.sigma + state.sigma.transpose());
  ++state.iteration;
  return state;
}

/// Per-component log-scale adaptation of scalar random-walk proposals, updated
/// once per batch from the batch-mean acceptance probability.
struct ScalarAdaptState {
  Eigen::VectorXd log_sd;
  Eigen::VectorXd alpha_sum;
  int batch_size = 50;
  int filled = 0;
  double xi = 0.7;
  double target = 0.44;
  std::int64_t batch = 1;  // index of the batch being filled

  static ScalarAdaptState init(Eigen::Index n, double sd0, int batch_size, double xi, double target,
                               std::int64_t first_batch = 1) {
    if (!(sd0 > 0.0)) throw std::invalid_argument("initial proposal sd must be > 0");
    if (batch_size < 1) throw std::invalid_argument("n_batch must be >= 1");
    ScalarAdaptState s;
    s.log_sd = Eigen::VectorXd::Constant(n, std::log(sd0));
    s.alpha_sum = Eigen::VectorXd::Zero(n);
    s.batch_size = batch_size;
    s.xi = xi;
    s.target = target;
    s.batch = std::max<std::int64_t>(1, first_batch);
    return s;
  }

  [[nodiscard]] double sd(Eigen::Index i) const { return std::exp(log_sd[i]); }
  [[nodiscard]] bool at_batch_boundary() const noexcept { return filled == batch_size; }
};

/// log sd <- log sd + b^{-xi} (mean_alpha - target). Only meaningful at batch
/// boundaries; anywhere else the state is returned unchanged.
[[nodiscard]] inline ScalarAdaptState scalar_batch_update(ScalarAdaptState state, const Eigen::VectorXd& mean_alpha) {
  if (!state.at_batch_boundary()) return state;
  const double gamma = std::pow(static_cast<double>(state.batch), -state.xi);
  state.log_sd.array() += gamma * (mean_alpha.array() - state.target);
  state.alpha_sum.setZero();
  state.filled = 0;
  ++state.batch;
  return state;
}

/// Close one adapting iteration: count it toward the batch and apply the
/// batch update on the boundary. The caller adds this iteration's acceptance
/// probabilities to alpha_sum first.
inline void scalar_end_iteration(ScalarAdaptState& state) {
  ++state.filled;
  if (state.at_batch_boundary()) {
    const Eigen::VectorXd mean = state.alpha_sum / static_cast<double>(state.batch_size);
    state = scalar_batch_update(std::move(state), mean);
  }
}

}  // namespace circspace
