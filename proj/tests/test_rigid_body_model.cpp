#include <gtest/gtest.h>

#include <random>

#include "quadplan/rigid_body_model.hpp"
#include "test_support.hpp"

namespace quadplan {
namespace {

using testing::central_difference;
using testing::random_input;
using testing::random_state;
using testing::relative_error;

RobotParams params() { return RobotParams::defaults(); }

RobotState propagate(RobotState x, const ControlInput& u, double duration, int steps, const RobotParams& p) {
  for (int i = 0; i < steps; ++i) x = integrate_step(x, u, duration / steps, p);
  return x;
}

TEST(RobotParams, DefaultsValidate) {
  EXPECT_NO_THROW(params().validate());
  RobotParams bad = params();
  bad.mass = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = params();
  bad.inertia(0, 1) = 0.1;
  EXPECT_THROW(bad.validate(), Error);
  bad = params();
  bad.nominal_stance[0].x() += 0.05;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(EulerRotation, IdentityAtZero) {
  EXPECT_TRUE(euler_xyz_rotation(Vec3::Zero()).isApprox(Mat3::Identity(), 1e-15));
}

TEST(EulerRotation, YawQuarterTurnMapsXToY) {
  const Vec3 mapped = euler_xyz_rotation(Vec3(0, 0, std::numbers::pi / 2)) * Vec3::UnitX();
  EXPECT_NEAR((mapped - Vec3::UnitY()).norm(), 0.0, 1e-15);
}

TEST(EulerRotation, AlwaysInSO3) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 theta = testing::random_vector(rng, 3, -3.0, 3.0);
    const Mat3 r = euler_xyz_rotation(theta);
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(EulerRotation, IntrinsicXYZComposition) {
  const Vec3 theta(0.3, -0.2, 0.7);
  const Eigen::Matrix3d expected = (Eigen::AngleAxisd(theta.x(), Vec3::UnitX()) *
                                    Eigen::AngleAxisd(theta.y(), Vec3::UnitY()) *
                                    Eigen::AngleAxisd(theta.z(), Vec3::UnitZ()))
                                       .toRotationMatrix();
  EXPECT_TRUE(euler_xyz_rotation(theta).isApprox(expected, 1e-14));
}

TEST(EulerRateMatrix, IdentityAtOrigin) {
  const Vec3 rates = euler_rate_matrix(Vec3::Zero()) * Vec3(0.1, 0, 0);
  EXPECT_NEAR((rates - Vec3(0.1, 0, 0)).norm(), 0.0, 1e-15);
  EXPECT_TRUE(euler_rate_matrix(Vec3::Zero()).isApprox(Mat3::Identity(), 1e-15));
}

// dR/dt along theta_dot = E(theta) w must equal R [w]x for body rates w.
TEST(EulerRateMatrix, MatchesRotationFiniteDifference) {
  std::mt19937 rng(5);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 theta = testing::random_vector(rng, 3, -1.2, 1.2);
    const Vec3 w = testing::random_vector(rng, 3, -2.0, 2.0);
    const Vec3 rates = euler_rate_matrix(theta) * w;
    const Mat3 fd = (euler_xyz_rotation(theta + h * rates) - euler_xyz_rotation(theta - h * rates)) / (2 * h);
    const Mat3 expected = euler_xyz_rotation(theta) * skew(w);
    EXPECT_LE(relative_error(fd, expected), 1e-5);
  }
}

TEST(EulerRateMatrix, ConditionDivergesTowardsGimbalLock) {
  double previous = 0.0;
  for (double margin : {0.5, 0.1, 1e-2, 1e-3}) {
    const Mat3 e = euler_rate_matrix(Vec3(0, std::numbers::pi / 2 - margin, 0.3));
    Eigen::JacobiSVD<Mat3> svd(e);
    const double cond = svd.singularValues()(0) / svd.singularValues()(2);
    EXPECT_GT(cond, previous);
    previous = cond;
  }
  EXPECT_GT(previous, 1e3);
  EXPECT_THROW(euler_rate_matrix(Vec3(0, std::numbers::pi / 2, 0)), Error);
  EXPECT_THROW(euler_rate_matrix(Vec3(0, -std::numbers::pi / 2 - 0.1, 0)), Error);
}

TEST(Dynamics, BallisticWithoutForces) {
  std::mt19937 rng(3);
  RobotState x = random_state(rng);
  x.base_angular_velocity().setZero();
  const StateVector dx = evaluate_dynamics(x, ControlInput(), params());
  EXPECT_EQ(Vec3(dx.segment<3>(6)), params().gravity);
  EXPECT_EQ(Vec3(dx.segment<3>(9)), Vec3::Zero());
}

TEST(Dynamics, SymmetricStanceIsEquilibrium) {
  const RobotParams p = params();
  const RobotState x = RobotState::standing(p, Vec3(0, 0, p.nominal_height));
  ControlInput u;
  for (int i = 0; i < kLegCount; ++i) u.contact_force(i) = Vec3(0, 0, p.weight() / 4);
  const StateVector dx = evaluate_dynamics(x, u, p);
  EXPECT_LT(dx.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Dynamics, SingleContactAngularAcceleration) {
  const RobotParams p = params();
  RobotState x;
  x.base_position() = Vec3(0.1, -0.2, 0.5);
  for (int i = 0; i < kLegCount; ++i) x.foot_position(i) = Vec3(x.base_position()) + Vec3(0, 0, -0.45);
  x.foot_position(Leg::LF) = Vec3(x.base_position()) + Vec3(0.3, 0, -0.45);
  ControlInput u;
  u.contact_force(index(Leg::LF)) = Vec3(0, 0, 100);

  // (0.3, 0, -0.45) x (0, 0, 100) = (0*100 - (-0.45)*0, (-0.45)*0 - 0.3*100, 0) = (0, -30, 0)
  const Vec3 torque(0.0, -30.0, 0.0);
  const Vec3 expected(torque.x() / 0.88, torque.y() / 1.42, torque.z() / 1.57);
  const StateVector dx = evaluate_dynamics(x, u, p);
  EXPECT_NEAR((Vec3(dx.segment<3>(9)) - expected).norm(), 0.0, 1e-12);
  EXPECT_NEAR(dx(10), -21.126760563380282, 1e-12);
}

TEST(Dynamics, AffineInInput) {
  std::mt19937 rng(8);
  const RobotParams p = params();
  for (int trial = 0; trial < 20; ++trial) {
    const RobotState x = random_state(rng);
    ControlInput u = random_input(rng);
    const StateVector d1 = evaluate_dynamics(x, u, p);
    for (int i = 0; i < kLegCount; ++i) u.contact_force(i) *= 2.0;
    const StateVector d2 = evaluate_dynamics(x, u, p);
    const Vec3 a1 = Vec3(d1.segment<3>(6)) - p.gravity;
    const Vec3 a2 = Vec3(d2.segment<3>(6)) - p.gravity;
    EXPECT_LT((a2 - 2.0 * a1).norm(), 1e-12);
  }
}

TEST(Dynamics, RejectsGimbalLock) {
  RobotState x;
  x.base_orientation() = Vec3(0, std::numbers::pi / 2, 0);
  EXPECT_THROW(evaluate_dynamics(x, ControlInput(), params()), Error);
  try {
    evaluate_dynamics(x, ControlInput(), params());
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingularOrientation);
  }
}

TEST(Linearize, StructuralBlocks) {
  std::mt19937 rng(1);
  const RobotParams p = params();
  const Linearization lin = linearize(random_state(rng), random_input(rng), p);
  for (int i = 0; i < kLegCount; ++i) {
    EXPECT_TRUE(Mat3(lin.B.block<3, 3>(kBaseDim + 3 * i, 3 * kLegCount + 3 * i)).isIdentity(0.0));
    EXPECT_TRUE(Mat3(lin.B.block<3, 3>(6, 3 * i)).isApprox(Mat3::Identity() / p.mass, 1e-15));
  }
}

TEST(Linearize, MatchesCentralDifferences) {
  std::mt19937 rng(2024);
  const RobotParams p = params();
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const RobotState x = random_state(rng);
    const ControlInput u = random_input(rng);
    const Linearization lin = linearize(x, u, p);
    const auto fx = [&](const Eigen::VectorXd& xv) -> Eigen::VectorXd {
      return evaluate_dynamics(RobotState(StateVector(xv)), u, p);
    };
    const auto fu = [&](const Eigen::VectorXd& uv) -> Eigen::VectorXd {
      return evaluate_dynamics(x, ControlInput(InputVector(uv)), p);
    };
    worst = std::max(worst, relative_error(lin.A, central_difference(fx, x.vector())));
    worst = std::max(worst, relative_error(lin.B, central_difference(fu, u.vector())));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Integration, FreeFallMatchesClosedForm) {
  const RobotParams p = params();
  const RobotState x0 = RobotState::standing(p, Vec3(0, 0, 1.0));
  const RobotState x1 = propagate(x0, ControlInput(), 0.1, 5, p);
  // -1/2 g t^2 with t = 0.1 s
  EXPECT_NEAR(x1.base_position().z() - 1.0, -0.5 * 9.81 * 0.1 * 0.1, 1e-9);
  EXPECT_NEAR(x1.base_position().z() - 1.0, -4.905e-2, 1e-9);
}

TEST(Integration, EquilibriumIsStationary) {
  const RobotParams p = params();
  const RobotState x0 = RobotState::standing(p, Vec3(0.2, 0.1, p.nominal_height));
  ControlInput u;
  for (int i = 0; i < kLegCount; ++i) u.contact_force(i) = Vec3(0, 0, p.weight() / 4);
  const RobotState x1 = propagate(x0, u, 1.0, 50, p);
  EXPECT_LT((x1.vector() - x0.vector()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Integration, FourthOrderConvergence) {
  std::mt19937 rng(77);
  const RobotParams p = params();
  RobotState x0 = random_state(rng);
  x0.base_angular_velocity() = Vec3(1.5, -2.0, 1.0);
  x0.base_orientation() = Vec3(0.2, 0.1, -0.3);
  const ControlInput u = random_input(rng);
  const double horizon = 0.4;
  const RobotState reference = propagate(x0, u, horizon, 1024, p);
  const double coarse = (propagate(x0, u, horizon, 8, p).vector() - reference.vector()).norm();
  const double fine = (propagate(x0, u, horizon, 16, p).vector() - reference.vector()).norm();
  const double ratio = coarse / fine;
  EXPECT_GT(ratio, 13.0);
  EXPECT_LT(ratio, 19.0);
}

TEST(Integration, ForceFreeAngularMomentumConserved) {
  const RobotParams p = params();
  RobotState x;
  x.base_position() = Vec3(0, 0, 1);
  x.base_orientation() = Vec3(0.1, -0.2, 0.3);
  x.base_angular_velocity() = Vec3(0.8, -1.1, 0.6);
  const auto momentum = [&](const RobotState& s) {
    return Vec3(euler_xyz_rotation(s.base_orientation()) * p.inertia * s.base_angular_velocity());
  };
  const Vec3 initial = momentum(x);
  for (int i = 0; i < 200; ++i) x = integrate_step(x, ControlInput(), 1e-3, p);
  EXPECT_LT((momentum(x) - initial).norm(), 1e-9);
}

TEST(Integration, DiscreteJacobiansMatchFiniteDifferences) {
  std::mt19937 rng(4);
  const RobotParams p = params();
  for (int trial = 0; trial < 10; ++trial) {
    const RobotState x = random_state(rng);
    const ControlInput u = random_input(rng);
    const DiscreteStep step = integrate_step_with_jacobians(x, u, 0.02, p);
    EXPECT_LT((step.next.vector() - integrate_step(x, u, 0.02, p).vector()).norm(), 1e-14);
    const auto fx = [&](const Eigen::VectorXd& xv) -> Eigen::VectorXd {
      return integrate_step(RobotState(StateVector(xv)), u, 0.02, p).vector();
    };
    const auto fu = [&](const Eigen::VectorXd& uv) -> Eigen::VectorXd {
      return integrate_step(x, ControlInput(InputVector(uv)), 0.02, p).vector();
    };
    EXPECT_LE(relative_error(step.A, central_difference(fx, x.vector())), 1e-6);
    EXPECT_LE(relative_error(step.B, central_difference(fu, u.vector())), 1e-6);
  }
}

TEST(Integration, RejectsNonPositiveStep) {
  EXPECT_THROW(integrate_step(RobotState(), ControlInput(), 0.0, params()), Error);
}

}  // namespace
}  // namespace quadplan
