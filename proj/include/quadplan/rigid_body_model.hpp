#pragma once

#include <cmath>
#include <numbers>

#include "quadplan/common.hpp"

namespace quadplan {

/// Mass and geometry of the single rigid body plus its nominal stance.
struct RobotParams {
  double mass = 30.0;
  Mat3 inertia = Eigen::Vector3d(0.88, 1.42, 1.57).asDiagonal();
  Vec3 gravity{0.0, 0.0, -9.81};
  /// Nominal foot positions in the base frame, indexed by Leg.
  std::array<Vec3, kLegCount> nominal_stance{};
  double nominal_height = 0.45;

  /// Rectangular stance symmetric about the base x/y axes.
  static RobotParams with_stance(double mass, const Vec3& inertia_diagonal, double nominal_height,
                                 double half_length, double half_width) {
    RobotParams p;
    p.mass = mass;
    p.inertia = inertia_diagonal.asDiagonal();
    p.nominal_height = nominal_height;
    p.nominal_stance[index(Leg::LF)] = Vec3(half_length, half_width, -nominal_height);
    p.nominal_stance[index(Leg::RF)] = Vec3(half_length, -half_width, -nominal_height);
    p.nominal_stance[index(Leg::LH)] = Vec3(-half_length, half_width, -nominal_height);
    p.nominal_stance[index(Leg::RH)] = Vec3(-half_length, -half_width, -nominal_height);
    return p;
  }

  static RobotParams defaults() { return with_stance(30.0, Vec3(0.88, 1.42, 1.57), 0.45, 0.3, 0.2); }

  double weight() const { return mass * gravity.norm(); }

  void validate() const {
    if (!(mass > 0.0)) throw Error(ErrorCode::kInvalidArgument, "robot mass must be positive");
    if ((inertia - inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw Error(ErrorCode::kInvalidArgument, "inertia tensor must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> eig(inertia);
    if (eig.eigenvalues().minCoeff() <= 0.0)
      throw Error(ErrorCode::kInvalidArgument, "inertia tensor must be positive definite");
    if (!(nominal_height > 0.0)) throw Error(ErrorCode::kInvalidArgument, "nominal height must be positive");
    const auto& s = nominal_stance;
    const auto mirrored = [](const Vec3& a, const Vec3& b, double sx, double sy) {
      return std::abs(a.x() - sx * b.x()) < 1e-9 && std::abs(a.y() - sy * b.y()) < 1e-9 &&
             std::abs(a.z() - b.z()) < 1e-9;
    };
    if (!mirrored(s[0], s[1], 1, -1) || !mirrored(s[2], s[3], 1, -1) || !mirrored(s[0], s[2], -1, 1))
      throw Error(ErrorCode::kInvalidArgument, "nominal stance must be symmetric about the base axes");
  }
};

/// x = [p, theta, p_dot, omega_b, r_LF, r_RF, r_LH, r_RH]. Feet are stored in the world frame.
class RobotState {
 public:
  RobotState() : v_(StateVector::Zero()) {}
  explicit RobotState(const StateVector& v) : v_(v) {}

  auto base_position() { return v_.segment<3>(0); }
  auto base_position() const { return v_.segment<3>(0); }
  auto base_orientation() { return v_.segment<3>(3); }
  auto base_orientation() const { return v_.segment<3>(3); }
  auto base_linear_velocity() { return v_.segment<3>(6); }
  auto base_linear_velocity() const { return v_.segment<3>(6); }
  auto base_angular_velocity() { return v_.segment<3>(9); }
  auto base_angular_velocity() const { return v_.segment<3>(9); }
  auto foot_position(int leg) { return v_.segment<3>(kBaseDim + 3 * leg); }
  auto foot_position(int leg) const { return v_.segment<3>(kBaseDim + 3 * leg); }
  auto foot_position(Leg leg) { return foot_position(index(leg)); }
  auto foot_position(Leg leg) const { return foot_position(index(leg)); }

  const StateVector& vector() const { return v_; }
  StateVector& vector() { return v_; }

  /// Standing state: base at `position` with the nominal stance under it.
  static RobotState standing(const RobotParams& params, const Vec3& base_position) {
    RobotState x;
    x.base_position() = base_position;
    for (int i = 0; i < kLegCount; ++i) x.foot_position(i) = base_position + params.nominal_stance[i];
    return x;
  }

 private:
  StateVector v_;
};

/// u = [lambda_LF..lambda_RH, v_LF..v_RH], both in the world frame.
class ControlInput {
 public:
  ControlInput() : v_(InputVector::Zero()) {}
  explicit ControlInput(const InputVector& v) : v_(v) {}

  auto contact_force(int leg) { return v_.segment<3>(3 * leg); }
  auto contact_force(int leg) const { return v_.segment<3>(3 * leg); }
  auto foot_velocity(int leg) { return v_.segment<3>(3 * kLegCount + 3 * leg); }
  auto foot_velocity(int leg) const { return v_.segment<3>(3 * kLegCount + 3 * leg); }

  const InputVector& vector() const { return v_; }
  InputVector& vector() { return v_; }

 private:
  InputVector v_;
};

inline constexpr double kGimbalMargin = 1e-4;

namespace detail {

inline Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}
inline Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}
inline Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}
inline Mat3 drot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return m;
}
inline Mat3 drot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return m;
}
inline Mat3 drot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return m;
}

inline void check_orientation(const Vec3& theta) {
  if (!(std::abs(theta.y()) < std::numbers::pi / 2.0 - kGimbalMargin))
    throw Error(ErrorCode::kSingularOrientation, "Euler pitch at gimbal lock: " + std::to_string(theta.y()));
}

}  // namespace detail

/// Base-to-world rotation, intrinsic X-Y-Z: R = Rx(theta_x) Ry(theta_y) Rz(theta_z).
inline Mat3 euler_xyz_rotation(const Vec3& theta) {
  return detail::rot_x(theta.x()) * detail::rot_y(theta.y()) * detail::rot_z(theta.z());
}

/// Maps base-frame angular velocity to XYZ Euler angle rates.
inline Mat3 euler_rate_matrix(const Vec3& theta) {
  detail::check_orientation(theta);
  const double cb = std::cos(theta.y()), tb = std::tan(theta.y());
  const double cc = std::cos(theta.z()), sc = std::sin(theta.z());
  Mat3 e;
  e << cc / cb, -sc / cb, 0.0,  //
      sc, cc, 0.0,              //
      -tb * cc, tb * sc, 1.0;
  return e;
}

namespace detail {

// d(E(theta) w)/d theta; E does not depend on theta_x.
inline Mat3 euler_rate_jacobian(const Vec3& theta, const Vec3& w) {
  const double cb = std::cos(theta.y()), sb = std::sin(theta.y()), tb = std::tan(theta.y());
  const double cc = std::cos(theta.z()), sc = std::sin(theta.z());
  Mat3 d_b, d_c;
  d_b << cc * sb / (cb * cb), -sc * sb / (cb * cb), 0.0,  //
      0.0, 0.0, 0.0,                                      //
      -cc / (cb * cb), sc / (cb * cb), 0.0;
  d_c << -sc / cb, -cc / cb, 0.0,  //
      cc, -sc, 0.0,                //
      tb * sc, tb * cc, 0.0;
  Mat3 j = Mat3::Zero();
  j.col(1) = d_b * w;
  j.col(2) = d_c * w;
  return j;
}

}  // namespace detail

/// Single rigid body with massless legs driven by contact forces at the feet.
inline StateVector evaluate_dynamics(const RobotState& x, const ControlInput& u, const RobotParams& params) {
  const Vec3 theta = x.base_orientation();
  const Mat3 rate = euler_rate_matrix(theta);
  const Mat3 rot = euler_xyz_rotation(theta);
  const Vec3 p = x.base_position();
  const Vec3 w = x.base_angular_velocity();

  Vec3 force = Vec3::Zero();
  Vec3 torque_world = Vec3::Zero();
  for (int i = 0; i < kLegCount; ++i) {
    const Vec3 lambda = u.contact_force(i);
    force += lambda;
    torque_world += (Vec3(x.foot_position(i)) - p).cross(lambda);
  }
  const Vec3 torque_base = rot.transpose() * torque_world;

  StateVector dx;
  dx.segment<3>(0) = x.base_linear_velocity();
  dx.segment<3>(3) = rate * w;
  dx.segment<3>(6) = force / params.mass + params.gravity;
  dx.segment<3>(9) = params.inertia.llt().solve(torque_base - w.cross(params.inertia * w));
  for (int i = 0; i < kLegCount; ++i) dx.segment<3>(kBaseDim + 3 * i) = u.foot_velocity(i);
  return dx;
}

struct Linearization {
  StateMatrix A;
  InputMatrix B;
};

/// Analytic Jacobians of evaluate_dynamics.
inline Linearization linearize(const RobotState& x, const ControlInput& u, const RobotParams& params) {
  const Vec3 theta = x.base_orientation();
  const Vec3 p = x.base_position();
  const Vec3 w = x.base_angular_velocity();
  const Mat3 rate = euler_rate_matrix(theta);
  const Mat3 rot = euler_xyz_rotation(theta);
  const Mat3 inertia_inv = params.inertia.inverse();

  Vec3 torque_world = Vec3::Zero();
  Mat3 sum_skew_lambda = Mat3::Zero();
  for (int i = 0; i < kLegCount; ++i) {
    const Vec3 lambda = u.contact_force(i);
    torque_world += (Vec3(x.foot_position(i)) - p).cross(lambda);
    sum_skew_lambda += skew(lambda);
  }

  Linearization lin;
  lin.A.setZero();
  lin.B.setZero();

  lin.A.block<3, 3>(0, 6).setIdentity();
  lin.A.block<3, 3>(3, 3) = detail::euler_rate_jacobian(theta, w);
  lin.A.block<3, 3>(3, 9) = rate;

  const Mat3 rx = detail::rot_x(theta.x()), ry = detail::rot_y(theta.y()), rz = detail::rot_z(theta.z());
  const std::array<Mat3, 3> d_rot{detail::drot_x(theta.x()) * ry * rz, rx * detail::drot_y(theta.y()) * rz,
                                  rx * ry * detail::drot_z(theta.z())};
  for (int j = 0; j < 3; ++j) lin.A.block<3, 1>(9, 3 + j) = inertia_inv * (d_rot[j].transpose() * torque_world);
  lin.A.block<3, 3>(9, 0) = inertia_inv * rot.transpose() * sum_skew_lambda;
  lin.A.block<3, 3>(9, 9) = inertia_inv * (skew(params.inertia * w) - skew(w) * params.inertia);

  for (int i = 0; i < kLegCount; ++i) {
    const Vec3 lambda = u.contact_force(i);
    const Vec3 lever = Vec3(x.foot_position(i)) - p;
    lin.A.block<3, 3>(9, kBaseDim + 3 * i) = -inertia_inv * rot.transpose() * skew(lambda);
    lin.B.block<3, 3>(6, 3 * i) = Mat3::Identity() / params.mass;
    lin.B.block<3, 3>(9, 3 * i) = inertia_inv * rot.transpose() * skew(lever);
    lin.B.block<3, 3>(kBaseDim + 3 * i, 3 * kLegCount + 3 * i).setIdentity();
  }
  return lin;
}

/// Classic RK4 step with the input held constant over the step.
inline RobotState integrate_step(const RobotState& x, const ControlInput& u, double dt, const RobotParams& params) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "integration step must be positive");
  const StateVector& x0 = x.vector();
  const StateVector k1 = evaluate_dynamics(x, u, params);
  const StateVector k2 = evaluate_dynamics(RobotState(x0 + 0.5 * dt * k1), u, params);
  const StateVector k3 = evaluate_dynamics(RobotState(x0 + 0.5 * dt * k2), u, params);
  const StateVector k4 = evaluate_dynamics(RobotState(x0 + dt * k3), u, params);
  return RobotState(x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

struct DiscreteStep {
  RobotState next;
  StateMatrix A;
  InputMatrix B;
};

/// RK4 step together with its exact Jacobians, obtained by differentiating every RK4 stage.
inline DiscreteStep integrate_step_with_jacobians(const RobotState& x, const ControlInput& u, double dt,
                                                  const RobotParams& params) {
  if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "integration step must be positive");
  const StateVector& x0 = x.vector();
  const StateMatrix eye = StateMatrix::Identity();

  const RobotState s1 = x;
  const StateVector k1 = evaluate_dynamics(s1, u, params);
  const Linearization l1 = linearize(s1, u, params);
  const StateMatrix j1x = l1.A;
  const InputMatrix j1u = l1.B;

  const RobotState s2(x0 + 0.5 * dt * k1);
  const StateVector k2 = evaluate_dynamics(s2, u, params);
  const Linearization l2 = linearize(s2, u, params);
  const StateMatrix j2x = l2.A * (eye + 0.5 * dt * j1x);
  const InputMatrix j2u = l2.A * (0.5 * dt * j1u) + l2.B;

  const RobotState s3(x0 + 0.5 * dt * k2);
  const StateVector k3 = evaluate_dynamics(s3, u, params);
  const Linearization l3 = linearize(s3, u, params);
  const StateMatrix j3x = l3.A * (eye + 0.5 * dt * j2x);
  const InputMatrix j3u = l3.A * (0.5 * dt * j2u) + l3.B;

  const RobotState s4(x0 + dt * k3);
  const StateVector k4 = evaluate_dynamics(s4, u, params);
  const Linearization l4 = linearize(s4, u, params);
  const StateMatrix j4x = l4.A * (eye + dt * j3x);
  const InputMatrix j4u = l4.A * (dt * j3u) + l4.B;

  DiscreteStep out;
  out.next = RobotState(x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  out.A = eye + dt / 6.0 * (j1x + 2.0 * j2x + 2.0 * j3x + j4x);
  out.B = dt / 6.0 * (j1u + 2.0 * j2u + 2.0 * j3u + j4u);
  return out;
}

}  // namespace quadplan
