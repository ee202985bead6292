#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace circspace {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Result of wrapping a linear value onto the circle: y = theta + 2*pi*k.
struct Wrapped {
  double theta;
  std::int64_t k;
};

/// Floor-based canonicalization into [0, 2pi) that also returns the winding number.
[[nodiscard]] inline Wrapped wrap_to_circle(double y) {
  if (!std::isfinite(y)) throw std::invalid_argument("wrap_to_circle: non-finite input");
  double k = std::floor(y / kTwoPi);
  double theta = y - kTwoPi * k;
  // y / 2pi can round across an integer boundary
  if (theta >= kTwoPi) {
    theta -= kTwoPi;
    k += 1.0;
  } else if (theta < 0.0) {
    theta += kTwoPi;
    k -= 1.0;
  }
  // tiny negative y: theta rounds up to exactly 2pi
  if (theta >= kTwoPi) theta = std::nextafter(kTwoPi, 0.0);
  return {theta, static_cast<std::int64_t>(k)};
}

/// A direction in radians, always held in [0, 2pi).
class Angle {
 public:
  constexpr Angle() noexcept = default;
  explicit Angle(double radians) : value_{wrap_to_circle(radians).theta} {}

  [[nodiscard]] static Angle from_degrees(double deg) { return Angle{deg * kPi / 180.0}; }

  [[nodiscard]] constexpr double value() const noexcept { return value_; }
  [[nodiscard]] double degrees() const noexcept { return value_ * 180.0 / kPi; }

  [[nodiscard]] Angle operator+(double delta) const { return Angle{value_ + delta}; }
  [[nodiscard]] Angle operator-(double delta) const { return Angle{value_ - delta}; }

  constexpr bool operator==(const Angle&) const noexcept = default;

 private:
  double value_ = 0.0;
};

/// Quadrant-aware inverse tangent of the point (y1, y2), mapped to [0, 2pi).
[[nodiscard]] inline Angle atan_star(double y1, double y2) {
  if (y1 == 0.0 && y2 == 0.0) throw std::invalid_argument("atan_star: angle of the origin is undefined");
  if (!std::isfinite(y1) || !std::isfinite(y2)) throw std::invalid_argument("atan_star: non-finite input");
  double a = std::atan2(y2, y1);
  if (a < 0.0) a += kTwoPi;
  return Angle{a};
}

/// 1 - cos(a - b), in [0, 2].
[[nodiscard]] inline double circular_distance(Angle a, Angle b) noexcept {
  return 1.0 - std::cos(a.value() - b.value());
}

/// Shortest arc length between two directions, in [0, pi].
[[nodiscard]] inline double angular_separation(Angle a, Angle b) noexcept {
  const double d = std::abs(a.value() - b.value());
  return std::min(d, kTwoPi - d);
}

struct CircularSummary {
  Angle mean_direction;
  double variance = 0.0;
  double resultant_length = 0.0;
};

/// First trigonometric moment summary. When the resultant vanishes the mean
/// direction is undefined and is reported as 0.
template <typename Range>
[[nodiscard]] CircularSummary circular_summary(const Range& angles) {
  double c = 0.0;
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& a : angles) {
    const double v = static_cast<Angle>(a).value();
    c += std::cos(v);
    s += std::sin(v);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("circular_summary: empty input");
  const double norm = std::hypot(c, s);
  double rbar = std::min(1.0, norm / static_cast<double>(n));
  CircularSummary out;
  if (rbar < 1e-12) {
    rbar = 0.0;
    out.mean_direction = Angle{0.0};
  } else {
    out.mean_direction = atan_star(c, s);
  }
  out.resultant_length = rbar;
  out.variance = 1.0 - rbar;
  return out;
}

/// Rotate every angle by the same offset.
[[nodiscard]] inline std::vector<Angle> rotate(std::span<const Angle> angles, double offset) {
  std::vector<Angle> out;
  out.reserve(angles.size());
  for (Angle a : angles) out.push_back(a + offset);
  return out;
}

enum class RecenterDirection { to_pi, from_pi };

/// to_pi rotates the sample so that its circular mean lands on pi and stores the
/// applied offset in `reference`; from_pi subtracts a previously stored offset.
[[nodiscard]] inline std::vector<Angle> recenter(std::span<const Angle> angles, RecenterDirection direction,
                                                 Angle& reference) {
  if (direction == RecenterDirection::to_pi) {
    if (angles.empty()) {
      reference = Angle{0.0};
      return {};
    }
    const auto summary = circular_summary(angles);
    reference = Angle{kPi - summary.mean_direction.value()};
    return rotate(angles, reference.value());
  }
  return rotate(angles, -reference.value());
}

}  // namespace circspace
