#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "circspace/circ_core.hpp"
#include "circspace/covkernel.hpp"
#include "circspace/gauss_core.hpp"
#include "circspace/model_types.hpp"

namespace circspace {

/// Uniform random sites on [0, width] x [0, height], ids "s1", "s2", ...
/// With `n_times` > 0 every site is repeated at time indices 0 .. n_times-1.
[[nodiscard]] inline SiteSet random_sites(std::size_t n, double width, double height, Rng& rng, int n_times = 0) {
  if (!(width > 0.0 && height > 0.0)) throw std::invalid_argument("random_sites: extent must be positive");
  std::uniform_real_distribution<double> ux(0.0, width);
  std::uniform_real_distribution<double> uy(0.0, height);
  std::vector<Coord> base(n);
  for (auto& c : base) {
    c.x = ux(rng);
    c.y = uy(rng);
  }
  SiteSet s;
  const int reps = n_times > 0 ? n_times : 1;
  for (int t = 0; t < reps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      s.ids.push_back("s" + std::to_string(i + 1));
      s.coords.push_back(base[i]);
      if (n_times > 0) s.times.push_back(static_cast<double>(t));
    }
  }
  return s;
}

/// Regular nx x ny grid over [0, width] x [0, height] (cell centres).
[[nodiscard]] inline SiteSet grid_sites(int nx, int ny, double width, double height) {
  if (nx < 1 || ny < 1) throw std::invalid_argument("grid_sites: grid must be at least 1 x 1");
  SiteSet s;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      s.ids.push_back("g" + std::to_string(j * nx + i + 1));
      s.coords.push_back({(i + 0.5) * width / nx, (j + 0.5) * height / ny});
    }
  return s;
}

struct SimulatedField {
  CircularDataset data;
  Eigen::VectorXd linear;  // the latent Gaussian field (n, or 2n interleaved)
};

/// Wrapped-normal field: y ~ N(alpha 1, sigma2 C), theta = y mod 2 pi.
[[nodiscard]] inline SimulatedField simulate_wn(const SiteSet& sites, const CorrelationSpec& spec, double alpha,
                                                double sigma2, Rng& rng) {
  sites.validate();
  const auto n = static_cast<Eigen::Index>(sites.size());
  const auto f = factorize(build_covariance(spec, CrossCovarianceScale::scalar(sigma2), sites.distances()));
  SimulatedField out;
  out.linear = mvn_sample(Eigen::VectorXd::Constant(n, alpha), f, rng);
  out.data.sites = sites;
  for (Eigen::Index i = 0; i < n; ++i) out.data.angles.emplace_back(out.linear[i]);
  return out;
}

/// Projected-normal field: y ~ N(1 (x) alpha, C (x) Xi), theta_i = atan*(y_2i-1, y_2i).
[[nodiscard]] inline SimulatedField simulate_pn(const SiteSet& sites, const CorrelationSpec& spec,
                                                const Eigen::Vector2d& alpha, double sigma2, double tau, Rng& rng) {
  sites.validate();
  const auto n = static_cast<Eigen::Index>(sites.size());
  const auto f = factorize(build_covariance(spec, CrossCovarianceScale::bivariate(sigma2, tau), sites.distances()));
  Eigen::VectorXd mean(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) mean.segment<2>(2 * i) = alpha;
  SimulatedField out;
  out.linear = mvn_sample(mean, f, rng);
  out.data.sites = sites;
  for (Eigen::Index i = 0; i < n; ++i) out.data.angles.push_back(atan_star(out.linear[2 * i], out.linear[2 * i + 1]));
  return out;
}

/// Split a dataset into the first `n_train` rows and the rest.
[[nodiscard]] inline std::pair<CircularDataset, CircularDataset> split_dataset(const CircularDataset& d, std::size_t n_train) {
  if (n_train > d.size()) throw std::invalid_argument("split_dataset: n_train exceeds dataset size");
  std::pair<CircularDataset, CircularDataset> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto& dst = i < n_train ? out.first : out.second;
    if (!d.sites.ids.empty()) dst.sites.ids.push_back(d.sites.ids[i]);
    dst.sites.coords.push_back(d.sites.coords[i]);
    if (d.temporal()) dst.sites.times.push_back(d.sites.times[i]);
    dst.angles.push_back(d.angles[i]);
    if (!d.speed.empty()) dst.speed.push_back(d.speed[i]);
  }
  return out;
}

}  // namespace circspace
