#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "circspace/model_types.hpp"

namespace circspace {

namespace detail {

inline void check_chains(std::size_t m, std::size_t n) {
  if (m < 2) throw std::invalid_argument("psrf needs at least two chains");
  if (n < 10) throw std::invalid_argument("psrf needs chains of length >= 10");
}

}  // namespace detail

/// Gelman-Rubin potential scale reduction factor of one scalar.
/// Identical chains (B = 0) give 1; zero within-chain variance with B > 0 gives inf.
[[nodiscard]] inline double psrf(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = m ? chains.front().size() : 0;
  detail::check_chains(m, n);
  for (const auto& c : chains)
    if (c.size() != n) throw std::invalid_argument("psrf needs chains of equal length");
  std::vector<double> means(m);
  double w = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (double x : chains[j]) s += x;
    means[j] = s / static_cast<double>(n);
    double ss = 0.0;
    for (double x : chains[j]) ss += (x - means[j]) * (x - means[j]);
    w += ss / static_cast<double>(n - 1);
  }
  w /= static_cast<double>(m);
  double grand = 0.0;
  for (double mu : means) grand += mu;
  grand /= static_cast<double>(m);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(n) / static_cast<double>(m - 1);

  const double scale = std::max({1.0, std::abs(grand)});
  if (b <= 1e-28 * scale * scale * static_cast<double>(n)) return 1.0;
  if (w <= 0.0) return std::numeric_limits<double>::infinity();
  const double nn = static_cast<double>(n);
  const double v = (nn - 1.0) / nn * w + (1.0 + 1.0 / static_cast<double>(m)) * b / nn;
  return std::sqrt(v / w);
}

/// PSRF of an angle diagnosed on its (cos, sin) embedding: the larger of the two.
[[nodiscard]] inline double psrf_circular(const std::vector<std::vector<double>>& chains) {
  std::vector<std::vector<double>> c(chains.size());
  std::vector<std::vector<double>> s(chains.size());
  for (std::size_t j = 0; j < chains.size(); ++j) {
    for (double x : chains[j]) {
      c[j].push_back(std::cos(x));
      s[j].push_back(std::sin(x));
    }
  }
  return std::max(psrf(c), psrf(s));
}

/// Brooks-Gelman multivariate PSRF. `chains[j]` is an (n x p) matrix of draws.
[[nodiscard]] inline double mpsrf(const std::vector<Eigen::MatrixXd>& chains) {
  const std::size_t m = chains.size();
  const auto n = m ? chains.front().rows() : 0;
  detail::check_chains(m, static_cast<std::size_t>(n));
  const auto p = chains.front().cols();
  if (p < 2) throw std::invalid_argument("mpsrf needs at least two parameters");
  for (const auto& c : chains)
    if (c.rows() != n || c.cols() != p) throw std::invalid_argument("mpsrf needs chains of equal shape");

  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd means(static_cast<Eigen::Index>(m), p);
  for (std::size_t j = 0; j < m; ++j) {
    const Eigen::RowVectorXd mu = chains[j].colwise().mean();
    means.row(static_cast<Eigen::Index>(j)) = mu;
    const Eigen::MatrixXd centred = chains[j].rowwise() - mu;
    w += centred.transpose() * centred / static_cast<double>(n - 1);
  }
  w /= static_cast<double>(m);
  const Eigen::MatrixXd mc = means.rowwise() - means.colwise().mean();
  const Eigen::MatrixXd b_over_n = mc.transpose() * mc / static_cast<double>(m - 1);
  if (b_over_n.cwiseAbs().maxCoeff() == 0.0) return 1.0;

  Eigen::LLT<Eigen::MatrixXd> llt(w);
  if (llt.info() != Eigen::Success || llt.matrixLLT().diagonal().minCoeff() <= 1e-12 * std::sqrt(w.diagonal().maxCoeff()))
    throw std::domain_error("mpsrf: within-chain covariance is singular");
  // eigenvalues of W^{-1} B/n via the symmetric form L^{-1} (B/n) L^{-T}
  const Eigen::MatrixXd li_b = llt.matrixL().solve(b_over_n);
  const Eigen::MatrixXd sym = llt.matrixL().solve(li_b.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sym + sym.transpose()), Eigen::EigenvaluesOnly);
  const double lambda = std::max(0.0, es.eigenvalues().maxCoeff());
  const double nn = static_cast<double>(n);
  return std::sqrt((nn - 1.0) / nn + (1.0 + 1.0 / static_cast<double>(m)) * lambda);
}

struct ParamDiagnostic {
  std::string name;
  double psrf = 1.0;
  bool circular = false;
};

struct DiagnosticsReport {
  std::vector<ParamDiagnostic> params;
  double mpsrf = std::numeric_limits<double>::quiet_NaN();  // NaN when undefined
  std::string mpsrf_note;
  std::vector<ChainStats> stats;

  [[nodiscard]] double max_psrf() const {
    double out = 1.0;
    for (const auto& p : params) out = std::max(out, p.psrf);
    return out;
  }
};

/// Model parameters (latent columns excluded) diagnosed by name. Under the
/// wrapped model `alpha` is treated as circular.
[[nodiscard]] inline std::vector<std::string> parameter_columns(const PosteriorDraws& draws) {
  std::vector<std::string> out;
  if (draws.chains.empty()) return out;
  for (const auto& c : draws.chains.front().columns) {
    if (c.starts_with("k_") || c.starts_with("r_") || c == "alpha_lin") continue;
    out.push_back(c);
  }
  return out;
}

[[nodiscard]] inline DiagnosticsReport diagnose(const PosteriorDraws& draws) {
  DiagnosticsReport rep;
  rep.stats = draws.stats;
  const auto names = parameter_columns(draws);
  std::vector<std::vector<std::vector<double>>> series(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (const auto& t : draws.chains) series[i].push_back(t.series(names[i]));
    const bool circ = draws.kind == ModelKind::wn && names[i] == "alpha";
    rep.params.push_back({names[i], circ ? psrf_circular(series[i]) : psrf(series[i]), circ});
  }
  // multivariate form on the linear embedding: alpha -> (cos, sin) under the wrapped model
  std::vector<Eigen::MatrixXd> mats;
  for (std::size_t j = 0; j < draws.chains.size(); ++j) {
    const auto n = static_cast<Eigen::Index>(draws.chains[j].rows.size());
    std::vector<Eigen::VectorXd> cols;
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& s = series[i][j];
      if (rep.params[i].circular) {
        Eigen::VectorXd c(n), sn(n);
        for (Eigen::Index r = 0; r < n; ++r) {
          c[r] = std::cos(s[static_cast<std::size_t>(r)]);
          sn[r] = std::sin(s[static_cast<std::size_t>(r)]);
        }
        cols.push_back(c);
        cols.push_back(sn);
      } else {
        cols.push_back(Eigen::Map<const Eigen::VectorXd>(s.data(), n));
      }
    }
    Eigen::MatrixXd mtx(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) mtx.col(static_cast<Eigen::Index>(c)) = cols[c];
    mats.push_back(std::move(mtx));
  }
  try {
    rep.mpsrf = mpsrf(mats);
  } catch (const std::exception& e) {
    rep.mpsrf_note = e.what();
  }
  return rep;
}

}  // namespace circspace
