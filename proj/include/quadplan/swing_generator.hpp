#pragma once

#include <algorithm>
#include <array>

#include "quadplan/common.hpp"

namespace quadplan {

struct SwingSample {
  Vec3 position;
  Vec3 velocity;
  Vec3 acceleration;
};

/// Rest-to-rest quintic a + b s(τ) with s = 10τ³ − 15τ⁴ + 6τ⁵.
struct QuinticSegment {
  double start = 0.0;
  double end = 0.0;
  double duration = 1.0;

  std::array<double, 3> evaluate(double t) const {
    const double tau = t / duration;
    const double t2 = tau * tau, t3 = t2 * tau;
    const double s = t3 * (10 - 15 * tau + 6 * t2);
    const double ds = 30 * t2 * (1 - tau) * (1 - tau) / duration;
    const double dds = 60 * tau * (1 - tau) * (1 - 2 * tau) / (duration * duration);
    const double delta = end - start;
    return {start + delta * s, delta * ds, delta * dds};
  }
};

class SwingSpline {
 public:
  SwingSpline() = default;

  SwingSpline(const Vec3& p0, const Vec3& p1, double duration, double apex_height)
      : p0_(p0), p1_(p1), duration_(duration), apex_height_(apex_height) {
    if (!(duration > 0.0)) throw Error(ErrorCode::kInvalidArgument, "swing duration must be positive");
    if (!(apex_height >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "apex height must be non-negative");
    for (int a = 0; a < 2; ++a) planar_[a] = {p0[a], p1[a], duration};
    const double apex = std::max(p0.z(), p1.z()) + apex_height;
    rise_ = {p0.z(), apex, 0.5 * duration};
    fall_ = {apex, p1.z(), 0.5 * duration};
  }

  SwingSample evaluate(double t) const {
    if (t < -1e-12 || t > duration_ + 1e-12) throw Error(ErrorCode::kOutOfRange, "swing time outside [0, T]");
    t = std::clamp(t, 0.0, duration_);
    SwingSample out;
    for (int a = 0; a < 2; ++a) {
      const auto v = planar_[a].evaluate(t);
      out.position[a] = v[0];
      out.velocity[a] = v[1];
      out.acceleration[a] = v[2];
    }
    const double half = 0.5 * duration_;
    const auto z = t <= half ? rise_.evaluate(t) : fall_.evaluate(t - half);
    out.position.z() = z[0];
    out.velocity.z() = z[1];
    out.acceleration.z() = z[2];
    return out;
  }

  const Vec3& liftoff() const { return p0_; }
  const Vec3& touchdown() const { return p1_; }
  double duration() const { return duration_; }
  double apex_height() const { return apex_height_; }

 private:
  Vec3 p0_ = Vec3::Zero();
  Vec3 p1_ = Vec3::Zero();
  double duration_ = 1.0;
  double apex_height_ = 0.0;
  std::array<QuinticSegment, 2> planar_{};
  QuinticSegment rise_{}, fall_{};
};

inline SwingSpline build_swing(const Vec3& p0, const Vec3& p1, double duration, double apex_height) {
  return SwingSpline(p0, p1, duration, apex_height);
}

}  // namespace quadplan
