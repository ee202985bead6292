#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "circspace/circ_core.hpp"

using namespace circspace;

TEST(WrapToCircle, KnownValues) {
  auto w = wrap_to_circle(3.0 * kPi);
  EXPECT_NEAR(w.theta, kPi, 1e-15);
  EXPECT_EQ(w.k, 1);
  w = wrap_to_circle(-kPi / 2.0);
  EXPECT_NEAR(w.theta, 1.5 * kPi, 1e-15);
  EXPECT_EQ(w.k, -1);
  w = wrap_to_circle(0.7);
  EXPECT_EQ(w.theta, 0.7);
  EXPECT_EQ(w.k, 0);
}

TEST(WrapToCircle, ExactMultiplesLandOnZero) {
  for (int m = -5; m <= 5; ++m) {
    const auto w = wrap_to_circle(m * kTwoPi);
    EXPECT_EQ(w.theta, 0.0) << m;
    EXPECT_EQ(w.k, m);
  }
}

TEST(WrapToCircle, RejectsNonFinite) {
  EXPECT_THROW((void)wrap_to_circle(std::numeric_limits<double>::infinity()), std::invalid_argument);
  EXPECT_THROW((void)wrap_to_circle(std::nan("")), std::invalid_argument);
}

TEST(WrapToCircle, ReconstructsWithinFewUlps) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mag(-8.0, 8.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const double y = unit(rng) * std::pow(10.0, mag(rng));
    const auto w = wrap_to_circle(y);
    ASSERT_GE(w.theta, 0.0);
    ASSERT_LT(w.theta, kTwoPi);
    const double back = w.theta + kTwoPi * static_cast<double>(w.k);
    // the residual theta carries rounding on the scale of 2 pi, so ulps are
    // counted on max(|y|, 2 pi)
    const double scale = std::max(std::abs(y), kTwoPi);
    const double ulp = std::nextafter(scale, 2.0 * scale) - scale;
    ASSERT_LE(std::abs(back - y), 4.0 * ulp) << y;
  }
}

TEST(WrapToCircle, TinyNegativeStaysBelowTwoPi) {
  for (double y : {-1e-300, -1e-17, -std::numeric_limits<double>::denorm_min()}) {
    const auto w = wrap_to_circle(y);
    EXPECT_GE(w.theta, 0.0);
    EXPECT_LT(w.theta, kTwoPi);
    EXPECT_LE(std::abs(w.theta + kTwoPi * static_cast<double>(w.k) - y), 8.9e-16) << y;
  }
}

TEST(AngleType, AlwaysCanonical) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  for (int i = 0; i < 5000; ++i) {
    const Angle a{u(rng)};
    ASSERT_GE(a.value(), 0.0);
    ASSERT_LT(a.value(), kTwoPi);
    const Angle b = a + u(rng);
    ASSERT_GE(b.value(), 0.0);
    ASSERT_LT(b.value(), kTwoPi);
  }
  EXPECT_NEAR(Angle::from_degrees(450.0).value(), kPi / 2.0, 1e-15);
  EXPECT_NEAR(Angle{kPi}.degrees(), 180.0, 1e-12);
}

TEST(AtanStar, Quadrants) {
  EXPECT_EQ(atan_star(1.0, 0.0).value(), 0.0);
  EXPECT_NEAR(atan_star(0.0, 1.0).value(), kPi / 2.0, 1e-15);
  EXPECT_NEAR(atan_star(-1.0, -1.0).value(), 1.25 * kPi, 1e-15);
  EXPECT_NEAR(atan_star(-1.0, 0.0).value(), kPi, 1e-15);
  EXPECT_NEAR(atan_star(0.0, -2.0).value(), 1.5 * kPi, 1e-15);
  EXPECT_THROW((void)atan_star(0.0, 0.0), std::invalid_argument);
}

TEST(AtanStar, InvertsPolarCoordinates) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> th(0.0, kTwoPi);
  std::uniform_real_distribution<double> lr(-6.0, 6.0);
  for (int i = 0; i < 20000; ++i) {
    const double t = th(rng);
    const double r = std::pow(10.0, lr(rng));
    const double back = atan_star(r * std::cos(t), r * std::sin(t)).value();
    ASSERT_LT(angular_separation(Angle{back}, Angle{t}), 1e-12) << t << " " << r;
  }
}

TEST(Distances, KnownValues) {
  const Angle t{1.3};
  EXPECT_EQ(circular_distance(t, t), 0.0);
  EXPECT_NEAR(circular_distance(Angle{0.0}, Angle{kPi}), 2.0, 1e-15);
  EXPECT_NEAR(circular_distance(Angle{0.0}, Angle{kPi / 2.0}), 1.0, 1e-15);
  EXPECT_NEAR(angular_separation(Angle{0.0}, Angle{1.5 * kPi}), kPi / 2.0, 1e-15);
  EXPECT_EQ(angular_separation(t, t), 0.0);
  EXPECT_NEAR(angular_separation(Angle{0.1}, Angle{kTwoPi - 0.1}), 0.2, 1e-14);
}

TEST(Distances, SymmetricRotationInvariantTriangle) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  for (int i = 0; i < 5000; ++i) {
    const Angle a{u(rng)}, b{u(rng)}, c{u(rng)};
    const double r = u(rng);
    ASSERT_NEAR(circular_distance(a, b), circular_distance(b, a), 1e-15);
    ASSERT_NEAR(angular_separation(a, b), angular_separation(b, a), 1e-15);
    ASSERT_NEAR(circular_distance(a + r, b + r), circular_distance(a, b), 1e-12);
    ASSERT_NEAR(angular_separation(a + r, b + r), angular_separation(a, b), 1e-12);
    ASSERT_LE(angular_separation(a, c), angular_separation(a, b) + angular_separation(b, c) + 1e-12);
    ASSERT_GE(circular_distance(a, b), 0.0);
    ASSERT_LE(circular_distance(a, b), 2.0);
    ASSERT_LE(angular_separation(a, b), kPi);
  }
}

TEST(CircularSummary, PointMassAndSymmetry) {
  const std::vector<Angle> same(3, Angle{0.9});
  auto s = circular_summary(same);
  EXPECT_NEAR(s.variance, 0.0, 1e-15);
  EXPECT_NEAR(s.mean_direction.value(), 0.9, 1e-15);
  s = circular_summary(std::vector<Angle>{Angle{0.0}, Angle{kPi / 2.0}});
  EXPECT_NEAR(s.mean_direction.value(), kPi / 4.0, 1e-15);
  EXPECT_NEAR(s.resultant_length, std::sqrt(0.5), 1e-15);
}

TEST(CircularSummary, DegenerateAndEmpty) {
  const auto s = circular_summary(std::vector<Angle>{Angle{0.0}, Angle{kPi}});
  EXPECT_EQ(s.mean_direction.value(), 0.0);
  EXPECT_EQ(s.variance, 1.0);
  EXPECT_THROW((void)circular_summary(std::vector<Angle>{}), std::invalid_argument);
}

TEST(CircularSummary, VarianceInUnitIntervalAndComplement) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::uniform_int_distribution<int> len(1, 40);
  for (int i = 0; i < 2000; ++i) {
    std::vector<Angle> a(static_cast<std::size_t>(len(rng)));
    for (auto& x : a) x = Angle{u(rng)};
    const auto s = circular_summary(a);
    ASSERT_GE(s.variance, 0.0);
    ASSERT_LE(s.variance, 1.0);
    ASSERT_DOUBLE_EQ(s.variance, 1.0 - s.resultant_length);
  }
}

TEST(Recenter, RoundTripAndTarget) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(1.0, 0.4);
  std::vector<Angle> a;
  for (int i = 0; i < 50; ++i) a.emplace_back(z(rng));
  Angle ref;
  const auto c = recenter(a, RecenterDirection::to_pi, ref);
  EXPECT_NEAR(circular_summary(c).mean_direction.value(), kPi, 1e-12);
  const auto back = recenter(c, RecenterDirection::from_pi, ref);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_LT(angular_separation(back[i], a[i]), 1e-13);
}

TEST(Recenter, ConstantSampleAndPlainShift) {
  Angle ref;
  const auto c = recenter(std::vector<Angle>(4, Angle{kPi / 3.0}), RecenterDirection::to_pi, ref);
  for (auto x : c) EXPECT_NEAR(x.value(), kPi, 1e-14);
  const auto r = rotate(std::vector<Angle>{Angle{0.0}, Angle{kPi}}, kPi / 2.0);
  EXPECT_NEAR(r[0].value(), kPi / 2.0, 1e-15);
  EXPECT_NEAR(r[1].value(), 1.5 * kPi, 1e-15);
}
