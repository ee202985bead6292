#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "circspace/covkernel.hpp"
#include "circspace/gauss_core.hpp"

using namespace circspace;

namespace {

// K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, composite Simpson on a
// truncated range. Independent of the library Bessel routine.
double bessel_k_quadrature(double nu, double x) {
  const double t_max = std::acosh(std::max(1.0, 750.0 / x)) + 5.0;
  const int n = 20000;
  const double h = t_max / n;
  auto f = [&](double t) { return std::exp(-x * std::cosh(t)) * std::cosh(nu * t); };
  double s = f(0.0) + f(t_max);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
  return s * h / 3.0;
}

double matern_oracle(double nu, double rho, double h) {
  if (h == 0.0) return 1.0;
  const double x = std::sqrt(2.0 * nu) * h / rho;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * bessel_k_quadrature(nu, x);
}

}  // namespace

TEST(Correlation, TableValues) {
  EXPECT_NEAR(correlation(Exponential{1.0}, {1.0, 0.0}), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(correlation(Matern{0.5, 1.0}, {2.0, 0.0}), std::exp(-2.0), 1e-12);
  EXPECT_NEAR(correlation(GaussianKernel{2.0}, {0.5, 0.0}), std::exp(-4.0 * 0.5), 1e-15);
  // gneiting at h_t = 0 collapses to the exponential in space
  EXPECT_NEAR(correlation(Gneiting{0.7, 3.0, 0.4}, {1.5, 0.0}), std::exp(-0.7 * 1.5), 1e-15);
  const double psi = 3.0 * 4.0 + 1.0;
  EXPECT_NEAR(correlation(Gneiting{0.7, 3.0, 0.4}, {1.5, 2.0}), std::exp(-0.7 * 1.5 / std::pow(psi, 0.2)) / psi, 1e-15);
}

TEST(Correlation, OneAtZeroDistance) {
  for (const CorrelationSpec s : {CorrelationSpec{Matern{1.5, 2.0}}, CorrelationSpec{Exponential{3.0}},
                                  CorrelationSpec{GaussianKernel{0.2}}, CorrelationSpec{Gneiting{1.0, 1.0, 1.0}}})
    EXPECT_EQ(correlation(s, {0.0, 0.0}), 1.0);
}

TEST(Correlation, RejectsMismatchAndBadParameters) {
  EXPECT_THROW((void)correlation(Exponential{1.0}, {1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW((void)correlation(Exponential{1.0}, {-1.0, 0.0}), std::invalid_argument);
  EXPECT_THROW(CorrelationSpec(Exponential{0.0}), std::invalid_argument);
  EXPECT_THROW(CorrelationSpec(Matern{-1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(CorrelationSpec(Gneiting{1.0, 1.0, 1.5}), std::invalid_argument);
  EXPECT_THROW((void)parse_family("spherical"), std::invalid_argument);
}

TEST(Correlation, MaternHalfIsExponentialInRange) {
  for (double rho : {0.3, 1.0, 4.0})
    for (double h = 0.0; h <= 10.0; h += 0.01)
      ASSERT_NEAR(correlation(Matern{0.5, rho}, {h, 0.0}), std::exp(-h / rho), 1e-10) << rho << " " << h;
}

TEST(Correlation, MaternMatchesBesselQuadrature) {
  for (double nu : {0.3, 0.5, 1.0, 1.5, 2.5, 4.0})
    for (double h : {0.01, 0.2, 1.0, 3.0, 8.0}) {
      const double want = matern_oracle(nu, 1.3, h);
      EXPECT_NEAR(correlation(Matern{nu, 1.3}, {h, 0.0}), want, 1e-9 * std::max(1.0, want)) << nu << " " << h;
    }
}

TEST(Correlation, NonIncreasingInSpace) {
  const std::vector<CorrelationSpec> specs{Matern{2.5, 1.0}, Exponential{0.5}, GaussianKernel{1.2}, Gneiting{0.8, 1.0, 0.5}};
  for (const auto& s : specs) {
    double prev = 1.0;
    for (double h = 0.0; h <= 20.0; h += 0.05) {
      const double c = correlation(s, {h, s.temporal() ? 1.0 : 0.0});
      ASSERT_LE(c, prev + 1e-15);
      ASSERT_GE(c, 0.0);
      prev = c;
    }
  }
}

TEST(DistanceMatrix, Basics) {
  const std::vector<Coord> two{{0, 0}, {3, 4}};
  const auto d = distance_matrix(two);
  EXPECT_EQ(d.space(0, 1), 5.0);
  EXPECT_EQ(d.space(1, 0), 5.0);
  EXPECT_EQ(d.space(0, 0), 0.0);
  EXPECT_FALSE(d.temporal());
  const std::vector<Coord> one{{1, 1}};
  EXPECT_EQ(distance_matrix(one).size(), 1);
  const std::vector<Coord> same{{2, 2}, {2, 2}};
  const std::vector<double> t{0.0, 2.0};
  const auto dt = distance_matrix(same, t);
  EXPECT_EQ(dt.space(0, 1), 0.0);
  EXPECT_EQ(dt.time(0, 1), 2.0);
  EXPECT_THROW((void)distance_matrix(two, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(BuildCovariance, SmallCases) {
  const std::vector<Coord> one{{0, 0}};
  const auto c1 = build_covariance(Exponential{1.0}, CrossCovarianceScale::scalar(2.5), distance_matrix(one));
  EXPECT_EQ(c1.rows(), 1);
  EXPECT_EQ(c1(0, 0), 2.5);
  const auto xi = CrossCovarianceScale::bivariate(2.0, 0.3);
  const auto c2 = build_covariance(Exponential{1.0}, xi, distance_matrix(one));
  EXPECT_TRUE(c2.isApprox(xi.matrix(), 0.0));
  EXPECT_EQ(xi.matrix()(1, 1), 1.0);
  EXPECT_NEAR(xi.matrix()(0, 1), 0.3 * std::sqrt(2.0), 1e-15);
  const std::vector<Coord> pair{{0, 0}, {1, 0}};
  const auto c3 = build_covariance(Exponential{1.0}, CrossCovarianceScale::scalar(2.0), distance_matrix(pair));
  EXPECT_NEAR(c3(0, 1), 2.0 * std::exp(-1.0), 1e-15);
  EXPECT_EQ(c3(0, 0), 2.0);
  EXPECT_THROW((void)CrossCovarianceScale::bivariate(1.0, 1.0), std::invalid_argument);
  EXPECT_THROW((void)CrossCovarianceScale::scalar(0.0), std::invalid_argument);
}

TEST(BuildCovariance, KroneckerLayoutIsSiteMajor) {
  const std::vector<Coord> pts{{0, 0}, {1, 1}, {2, 0}};
  const auto d = distance_matrix(pts);
  const CorrelationSpec spec = Exponential{0.7};
  const auto xi = CrossCovarianceScale::bivariate(1.7, -0.4);
  const auto big = build_covariance(spec, xi, d);
  const auto corr = correlation_matrix(spec, d);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) EXPECT_DOUBLE_EQ(big(2 * i + a, 2 * j + b), corr(i, j) * xi.matrix()(a, b));
}

TEST(BuildCovariance, RandomAdmissibleParametersFactorize) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_real_distribution<double> dec(0.1, 3.0);
  std::uniform_real_distribution<double> tau(-0.9, 0.9);
  for (int rep = 0; rep < 40; ++rep) {
    std::vector<Coord> pts(50);
    std::vector<double> times(50);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      pts[i] = {u(rng), u(rng)};
      times[i] = static_cast<double>(i % 4);
    }
    const std::vector<CorrelationSpec> specs{Matern{1.5, dec(rng)}, Exponential{dec(rng)}, GaussianKernel{dec(rng)}};
    for (const auto& s : specs) {
      const auto c = build_covariance(s, CrossCovarianceScale::bivariate(dec(rng), tau(rng)), distance_matrix(pts));
      EXPECT_NO_THROW((void)factorize(c));
    }
    const auto g = build_covariance(Gneiting{dec(rng), dec(rng), 0.5}, CrossCovarianceScale::scalar(1.0),
                                    distance_matrix(pts, times));
    EXPECT_NO_THROW((void)factorize(g));
  }
}

TEST(CorrelationSpec, SampledRoundTrip) {
  const CorrelationSpec g = Gneiting{0.1, 0.2, 0.3};
  EXPECT_EQ(g.sampled_names(), (std::vector<std::string>{"rho_sp", "rho_t", "eta"}));
  const std::vector<double> v{1.0, 2.0, 0.9};
  EXPECT_EQ(g.with_sampled(v).sampled_values(), v);
  const CorrelationSpec m = Matern{2.5, 1.0};
  const std::vector<double> r{3.0};
  const auto m2 = m.with_sampled(r);
  EXPECT_EQ(std::get<Matern>(m2.params()).nu, 2.5);
  EXPECT_EQ(std::get<Matern>(m2.params()).rho, 3.0);
}
