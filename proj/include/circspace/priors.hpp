#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <variant>

#include <Eigen/Dense>

namespace circspace {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct InverseGamma {
  double shape = 2.0;
  double scale = 1.0;

  void validate() const {
    if (!(shape > 0.0) || !(scale > 0.0)) throw std::invalid_argument("inverse gamma prior needs shape > 0 and scale > 0");
  }
  [[nodiscard]] double log_pdf(double x) const {
    if (!(x > 0.0)) return kNegInf;
    return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
  }
  /// Mean when it exists, otherwise the mode.
  [[nodiscard]] double center() const { return shape > 1.0 ? scale / (shape - 1.0) : scale / (shape + 1.0); }
};

struct UniformPrior {
  double lo = 0.0;
  double hi = 1.0;

  void validate() const {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) throw std::invalid_argument("uniform prior needs lo < hi");
  }
  [[nodiscard]] bool contains(double x) const noexcept { return x > lo && x < hi; }
  [[nodiscard]] double log_pdf(double x) const { return contains(x) ? -std::log(hi - lo) : kNegInf; }
  [[nodiscard]] double center() const noexcept { return 0.5 * (lo + hi); }
};

struct BetaPrior {
  double a = 1.0;
  double b = 1.0;

  void validate() const {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("beta prior needs a > 0 and b > 0");
  }
  [[nodiscard]] double log_pdf(double x) const {
    if (!(x > 0.0 && x < 1.0)) return kNegInf;
    return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
  }
  [[nodiscard]] double center() const noexcept { return a / (a + b); }
};

/// Wrapped normal prior on the WN mean direction, held through its linear representative.
struct WrappedNormalPrior {
  double mean = 0.0;
  double var = 10.0;

  void validate() const {
    if (!(var >= 0.0) || !std::isfinite(mean)) throw std::invalid_argument("wrapped normal prior needs var >= 0");
  }
};

struct BivariateNormalPrior {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = 10.0 * Eigen::Matrix2d::Identity();

  void validate() const {
    if (!mean.allFinite() || !cov.allFinite()) throw std::invalid_argument("bivariate normal prior must be finite");
    if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12) throw std::invalid_argument("bivariate normal prior covariance must be symmetric");
    if (cov.isZero(0.0)) return;
    Eigen::LLT<Eigen::Matrix2d> llt(cov);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("bivariate normal prior covariance must be positive definite or zero");
  }
};

using ScalarPrior = std::variant<InverseGamma, UniformPrior, BetaPrior>;

[[nodiscard]] inline double log_prior(const ScalarPrior& p, double x) {
  return std::visit([x](const auto& q) { return q.log_pdf(x); }, p);
}

}  // namespace circspace
