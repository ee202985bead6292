#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace circspace {

// Correlation families. Exponential and gaussian use a decay that multiplies
// the distance; matern uses a range that divides it.
struct Matern {
  double nu = 0.5;
  double rho = 1.0;
};
struct Exponential {
  double rho = 1.0;
};
struct GaussianKernel {
  double rho = 1.0;
};
struct Gneiting {
  double rho_sp = 1.0;
  double rho_t = 1.0;
  double eta = 0.5;
};

enum class Family { matern, exponential, gaussian, gneiting };

[[nodiscard]] inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::matern: return "matern";
    case Family::exponential: return "exponential";
    case Family::gaussian: return "gaussian";
    case Family::gneiting: return "gneiting";
  }
  return "unknown";
}

[[nodiscard]] inline Family parse_family(std::string_view name) {
  if (name == "matern") return Family::matern;
  if (name == "exponential") return Family::exponential;
  if (name == "gaussian") return Family::gaussian;
  if (name == "gneiting") return Family::gneiting;
  throw std::invalid_argument("unknown correlation family '" + std::string(name) + "'");
}

class CorrelationSpec {
 public:
  using Params = std::variant<Matern, Exponential, GaussianKernel, Gneiting>;

  CorrelationSpec() = default;
  CorrelationSpec(Params p) : params_{p} { validate(); }  // NOLINT(google-explicit-constructor)
  CorrelationSpec(Matern p) : CorrelationSpec(Params{p}) {}  // NOLINT(google-explicit-constructor)
  CorrelationSpec(Exponential p) : CorrelationSpec(Params{p}) {}  // NOLINT(google-explicit-constructor)
  CorrelationSpec(GaussianKernel p) : CorrelationSpec(Params{p}) {}  // NOLINT(google-explicit-constructor)
  CorrelationSpec(Gneiting p) : CorrelationSpec(Params{p}) {}  // NOLINT(google-explicit-constructor)

  [[nodiscard]] Family family() const noexcept { return static_cast<Family>(params_.index()); }
  [[nodiscard]] const Params& params() const noexcept { return params_; }
  [[nodiscard]] bool temporal() const noexcept { return family() == Family::gneiting; }

  /// Names of the sampled decay/separability parameters, in block order.
  /// The matern smoothness is held fixed.
  [[nodiscard]] std::vector<std::string> sampled_names() const {
    switch (family()) {
      case Family::gneiting: return {"rho_sp", "rho_t", "eta"};
      default: return {"rho"};
    }
  }

  [[nodiscard]] std::vector<double> sampled_values() const {
    return std::visit(
        [](const auto& p) -> std::vector<double> {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Gneiting>) {
            return {p.rho_sp, p.rho_t, p.eta};
          } else {
            return {p.rho};
          }
        },
        params_);
  }

  /// Copy with the sampled parameters replaced (same order as sampled_names()).
  [[nodiscard]] CorrelationSpec with_sampled(std::span<const double> v) const {
    if (v.size() != sampled_names().size()) throw std::invalid_argument("with_sampled: wrong parameter count");
    Params p = params_;
    std::visit(
        [&](auto& q) {
          using T = std::decay_t<decltype(q)>;
          if constexpr (std::is_same_v<T, Gneiting>) {
            q.rho_sp = v[0];
            q.rho_t = v[1];
            q.eta = v[2];
          } else {
            q.rho = v[0];
          }
        },
        p);
    return CorrelationSpec{p};
  }

  void validate() const {
    auto positive = [](double v, const char* what) {
      if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string("correlation: ") + what + " must be > 0");
    };
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Matern>) {
            positive(p.nu, "nu");
            positive(p.rho, "rho");
          } else if constexpr (std::is_same_v<T, Gneiting>) {
            positive(p.rho_sp, "rho_sp");
            positive(p.rho_t, "rho_t");
            if (!(p.eta >= 0.0 && p.eta <= 1.0)) throw std::invalid_argument("correlation: eta must lie in [0, 1]");
          } else {
            positive(p.rho, "rho");
          }
        },
        params_);
  }

 private:
  Params params_ = Exponential{};
};

struct DistancePair {
  double h_sp = 0.0;
  double h_t = 0.0;
};

namespace detail {

inline double matern(double nu, double range, double h) {
  if (h == 0.0) return 1.0;
  const double x = std::sqrt(2.0 * nu) * h / range;
  const double k = std::cyl_bessel_k(nu, x);
  if (k == 0.0) return 0.0;  // underflow far beyond the range
  const double log_c = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x) + std::log(k);
  return std::min(1.0, std::exp(log_c));
}

}  // namespace detail

[[nodiscard]] inline double correlation(const CorrelationSpec& spec, DistancePair d) {
  if (!(d.h_sp >= 0.0) || !(d.h_t >= 0.0) || !std::isfinite(d.h_sp) || !std::isfinite(d.h_t))
    throw std::invalid_argument("correlation: distances must be finite and non-negative");
  if (d.h_t > 0.0 && !spec.temporal())
    throw std::invalid_argument("correlation: temporal distance requires the gneiting family");
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Matern>) {
          return detail::matern(p.nu, p.rho, d.h_sp);
        } else if constexpr (std::is_same_v<T, Exponential>) {
          return std::exp(-p.rho * d.h_sp);
        } else if constexpr (std::is_same_v<T, GaussianKernel>) {
          return std::exp(-p.rho * p.rho * d.h_sp);
        } else {
          const double psi = p.rho_t * d.h_t * d.h_t + 1.0;
          return std::exp(-p.rho_sp * d.h_sp / std::pow(psi, p.eta / 2.0)) / psi;
        }
      },
      spec.params());
}

struct Coord {
  double x = 0.0;
  double y = 0.0;
};

/// Pairwise planar and temporal distances. `time` is empty for purely spatial data.
struct DistanceMatrix {
  Eigen::MatrixXd space;
  Eigen::MatrixXd time;

  [[nodiscard]] Eigen::Index size() const noexcept { return space.rows(); }
  [[nodiscard]] bool temporal() const noexcept { return time.size() > 0; }
  [[nodiscard]] DistancePair operator()(Eigen::Index i, Eigen::Index j) const {
    return {space(i, j), temporal() ? time(i, j) : 0.0};
  }
};

[[nodiscard]] inline DistanceMatrix distance_matrix(std::span<const Coord> sites, std::span<const double> times = {}) {
  if (!times.empty() && times.size() != sites.size())
    throw std::invalid_argument("distance_matrix: times and sites differ in length");
  const auto n = static_cast<Eigen::Index>(sites.size());
  DistanceMatrix out;
  out.space = Eigen::MatrixXd::Zero(n, n);
  if (!times.empty()) out.time = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& a = sites[static_cast<std::size_t>(i)];
    if (!std::isfinite(a.x) || !std::isfinite(a.y)) throw std::invalid_argument("distance_matrix: non-finite coordinate");
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& b = sites[static_cast<std::size_t>(j)];
      out.space(i, j) = out.space(j, i) = std::hypot(a.x - b.x, a.y - b.y);
      if (!times.empty())
        out.time(i, j) = out.time(j, i) =
            std::abs(times[static_cast<std::size_t>(i)] - times[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

/// Cross-covariance scale Xi. For p = 1 it is the scalar sigma2; for p = 2 it is
/// [[sigma2, tau*sigma], [tau*sigma, 1]] with the unit (2,2) entry fixed.
class CrossCovarianceScale {
 public:
  static CrossCovarianceScale scalar(double sigma2) { return CrossCovarianceScale{sigma2, 0.0, 1}; }
  static CrossCovarianceScale bivariate(double sigma2, double tau) { return CrossCovarianceScale{sigma2, tau, 2}; }

  [[nodiscard]] int p() const noexcept { return p_; }
  [[nodiscard]] double sigma2() const noexcept { return sigma2_; }
  [[nodiscard]] double tau() const noexcept { return tau_; }

  [[nodiscard]] Eigen::MatrixXd matrix() const {
    if (p_ == 1) return Eigen::MatrixXd::Constant(1, 1, sigma2_);
    const double off = tau_ * std::sqrt(sigma2_);
    Eigen::MatrixXd xi(2, 2);
    xi << sigma2_, off, off, 1.0;
    return xi;
  }

 private:
  CrossCovarianceScale(double sigma2, double tau, int p) : sigma2_{sigma2}, tau_{tau}, p_{p} {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("Xi: sigma2 must be > 0");
    if (!(tau > -1.0 && tau < 1.0)) throw std::invalid_argument("Xi: tau must lie in (-1, 1)");
  }

  double sigma2_;
  double tau_;
  int p_;
};

[[nodiscard]] inline Eigen::MatrixXd correlation_matrix(const CorrelationSpec& spec, const DistanceMatrix& dists) {
  const Eigen::Index n = dists.size();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    c(j, j) = 1.0;
    for (Eigen::Index i = j + 1; i < n; ++i) c(i, j) = c(j, i) = correlation(spec, dists(i, j));
  }
  return c;
}

/// Kronecker product of a correlation matrix with Xi, site-major ordering.
[[nodiscard]] inline Eigen::MatrixXd kronecker_xi(const Eigen::MatrixXd& corr, const CrossCovarianceScale& xi) {
  if (xi.p() == 1) return xi.sigma2() * corr;
  const Eigen::MatrixXd x = xi.matrix();
  const Eigen::Index n = corr.rows();
  const Eigen::Index m = corr.cols();
  Eigen::MatrixXd out(2 * n, 2 * m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) out.block<2, 2>(2 * i, 2 * j) = corr(i, j) * x;
  return out;
}

[[nodiscard]] inline Eigen::MatrixXd build_covariance(const CorrelationSpec& spec, const CrossCovarianceScale& xi,
                                                      const DistanceMatrix& dists) {
  Eigen::MatrixXd out = kronecker_xi(correlation_matrix(spec, dists), xi);
  if (!out.allFinite()) throw std::domain_error("build_covariance: non-finite entry");
  return out;
}

/// Cross-correlation between two site sets given their pairwise distances.
[[nodiscard]] inline Eigen::MatrixXd cross_correlation(const CorrelationSpec& spec, const Eigen::MatrixXd& h_sp,
                                                       const Eigen::MatrixXd* h_t) {
  Eigen::MatrixXd c(h_sp.rows(), h_sp.cols());
  for (Eigen::Index j = 0; j < h_sp.cols(); ++j)
    for (Eigen::Index i = 0; i < h_sp.rows(); ++i)
      c(i, j) = correlation(spec, {h_sp(i, j), h_t ? (*h_t)(i, j) : 0.0});
  return c;
}

}  // namespace circspace
