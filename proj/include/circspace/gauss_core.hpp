#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace circspace {

using Rng = std::mt19937_64;

/// Raised when a matrix handed to factorize() is not positive definite.
class NotPositiveDefinite : public std::runtime_error {
 public:
  explicit NotPositiveDefinite(Eigen::Index pivot)
      : std::runtime_error("matrix is not positive definite (failing pivot " + std::to_string(pivot) + ")"),
        pivot_{pivot} {}
  [[nodiscard]] Eigen::Index pivot() const noexcept { return pivot_; }

 private:
  Eigen::Index pivot_;
};

/// Lower Cholesky factor of a symmetric positive definite matrix.
class SpdFactor {
 public:
  explicit SpdFactor(Eigen::MatrixXd lower) : lower_{std::move(lower)} {
    logdet_ = 2.0 * lower_.diagonal().array().log().sum();
  }

  [[nodiscard]] Eigen::Index dim() const noexcept { return lower_.rows(); }
  [[nodiscard]] const Eigen::MatrixXd& lower() const noexcept { return lower_; }
  [[nodiscard]] double logdet() const noexcept { return logdet_; }

  /// L^{-1} b
  [[nodiscard]] Eigen::VectorXd whiten(const Eigen::VectorXd& b) const {
    return lower_.triangularView<Eigen::Lower>().solve(b);
  }
  [[nodiscard]] Eigen::MatrixXd whiten(const Eigen::MatrixXd& b) const {
    return lower_.triangularView<Eigen::Lower>().solve(b);
  }
  /// M^{-1} b
  template <typename Derived>
  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixBase<Derived>& b) const {
    Eigen::MatrixXd z = lower_.triangularView<Eigen::Lower>().solve(b);
    return lower_.transpose().triangularView<Eigen::Upper>().solve(z);
  }
  [[nodiscard]] Eigen::MatrixXd inverse() const {
    const Eigen::MatrixXd linv =
        lower_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(dim(), dim()));
    Eigen::MatrixXd inv = linv.transpose() * linv;
    return 0.5 * (inv + inv.transpose());
  }
  [[nodiscard]] Eigen::MatrixXd reconstruct() const { return lower_ * lower_.transpose(); }

 private:
  Eigen::MatrixXd lower_;
  double logdet_ = 0.0;
};

namespace detail {

// Unblocked scan used only to locate the failing pivot after Eigen rejects a matrix.
inline Eigen::Index first_bad_pivot(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = m(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) return j;
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) l(i, j) = (m(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
  }
  return n;
}

}  // namespace detail

/// Cholesky factorization; returns nullopt instead of throwing when the matrix
/// is not positive definite.
[[nodiscard]] inline std::optional<SpdFactor> try_factorize(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return std::nullopt;
  if (!m.allFinite()) return std::nullopt;
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  Eigen::MatrixXd l = llt.matrixL();
  if (!(l.diagonal().array() > 0.0).all()) return std::nullopt;
  return SpdFactor{std::move(l)};
}

[[nodiscard]] inline SpdFactor factorize(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("factorize: matrix is not square");
  if (m.rows() == 0) throw std::invalid_argument("factorize: empty matrix");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if (((m - m.transpose()).cwiseAbs().maxCoeff()) > 1e-10 * scale)
    throw std::invalid_argument("factorize: matrix is not symmetric");
  if (auto f = try_factorize(m)) return std::move(*f);
  throw NotPositiveDefinite{detail::first_bad_pivot(m)};
}

inline constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

[[nodiscard]] inline double mvn_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, const SpdFactor& factor) {
  if (x.size() != mean.size() || x.size() != factor.dim()) throw std::invalid_argument("mvn_logpdf: dimension mismatch");
  const Eigen::VectorXd z = factor.whiten(Eigen::VectorXd(x - mean));
  return -0.5 * z.squaredNorm() - 0.5 * factor.logdet() - 0.5 * static_cast<double>(x.size()) * kLog2Pi;
}

[[nodiscard]] inline Eigen::VectorXd standard_normal(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> z;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = z(rng);
  return v;
}

[[nodiscard]] inline Eigen::VectorXd mvn_sample(const Eigen::VectorXd& mean, const SpdFactor& factor, Rng& rng) {
  if (mean.size() != factor.dim()) throw std::invalid_argument("mvn_sample: dimension mismatch");
  return mean + factor.lower().triangularView<Eigen::Lower>() * standard_normal(mean.size(), rng);
}

struct ConditionalNormal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Gaussian conditioning of the unobserved block on observed values.
[[nodiscard]] inline ConditionalNormal condition(const Eigen::VectorXd& joint_mean, const Eigen::MatrixXd& joint_cov,
                                                 std::span<const Eigen::Index> observed_idx,
                                                 const Eigen::VectorXd& observed_values) {
  const Eigen::Index n = joint_mean.size();
  if (joint_cov.rows() != n || joint_cov.cols() != n) throw std::invalid_argument("condition: dimension mismatch");
  if (observed_idx.empty() || static_cast<Eigen::Index>(observed_idx.size()) >= n)
    throw std::invalid_argument("condition: observed index set must be nonempty and proper");
  if (static_cast<Eigen::Index>(observed_idx.size()) != observed_values.size())
    throw std::invalid_argument("condition: observed values do not match index set");

  std::vector<bool> is_obs(static_cast<std::size_t>(n), false);
  for (auto i : observed_idx) {
    if (i < 0 || i >= n || is_obs[static_cast<std::size_t>(i)]) throw std::invalid_argument("condition: bad observed index");
    is_obs[static_cast<std::size_t>(i)] = true;
  }
  std::vector<Eigen::Index> obs(observed_idx.begin(), observed_idx.end());
  std::vector<Eigen::Index> un;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!is_obs[static_cast<std::size_t>(i)]) un.push_back(i);

  const Eigen::MatrixXd s_oo = joint_cov(obs, obs);
  const Eigen::MatrixXd s_uo = joint_cov(un, obs);
  const Eigen::MatrixXd s_uu = joint_cov(un, un);
  auto f = try_factorize(s_oo);
  if (!f) throw std::domain_error("condition: observed covariance block is singular");

  const Eigen::VectorXd resid = observed_values - joint_mean(obs);
  const Eigen::MatrixXd w = f->whiten(Eigen::MatrixXd(s_uo.transpose()));  // L^{-1} S_ou
  ConditionalNormal out;
  out.mean = joint_mean(un) + w.transpose() * f->whiten(resid);
  out.covariance = s_uu - w.transpose() * w;
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  return out;
}

}  // namespace circspace
