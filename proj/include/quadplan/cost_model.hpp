#pragma once

#include <array>
#include <cmath>
#include <utility>

#include "quadplan/common.hpp"
#include "quadplan/rigid_body_model.hpp"

namespace quadplan {

using BaseWeights = Eigen::Matrix<double, kBaseDim, 1>;
using LegWeights = Eigen::Matrix<double, 3 * kLegCount, 1>;

/// Diagonal weights of the quadratic running and final costs.
struct CostWeights {
  BaseWeights q_base = BaseWeights::Zero();
  LegWeights q_footstep = LegWeights::Zero();
  StateVector q_final = StateVector::Zero();
  LegWeights r_contact = LegWeights::Zero();
  LegWeights r_velocity = LegWeights::Zero();
  double w_reach = 0.0;

  /// Running state weights diag(Q_base, Q_footstep).
  StateVector q_running() const {
    StateVector q;
    q << q_base, q_footstep;
    return q;
  }
  InputVector r_input() const {
    InputVector r;
    r << r_contact, r_velocity;
    return r;
  }

  static CostWeights flat_walk_defaults() {
    CostWeights w;
    w.q_base << 10, 10, 10, 5, 5, 5, 1, 1, 1, 1, 1, 1;
    w.q_footstep.setConstant(50.0);
    w.q_final = 10.0 * w.q_running();
    w.r_contact.setConstant(1e-5);
    w.r_velocity.setConstant(1e-2);
    w.w_reach = 1.0;
    return w;
  }

  void validate() const {
    if (q_base.minCoeff() < 0 || q_footstep.minCoeff() < 0 || q_final.minCoeff() < 0 || r_contact.minCoeff() < 0 ||
        r_velocity.minCoeff() < 0 || w_reach < 0)
      throw Error(ErrorCode::kInvalidArgument, "cost weights must be non-negative");
    if (q_final.segment<6>(6).minCoeff() <= 0)
      throw Error(ErrorCode::kInvalidArgument, "final base velocity weights must be positive");
  }
};

struct ReferenceStates {
  StateVector running = StateVector::Zero();
  StateVector final_state = StateVector::Zero();
  StateVector reach = StateVector::Zero();
};

/// Geometry of the interpolation between the nominal and the tilted stance.
struct ReachabilityParams {
  double h_n = 0.45;
  double h_c = 0.30;
  double w_x = 0.6;
  double w_y = 0.4;
  double alpha_x = 0, alpha_y = 0;
  double q_x = 0, q_y = 0;
  /// Half inter-foot distances, used as lever arms of the height-difference terms.
  double d_x = 0, d_y = 0;
  /// Derived alongside the others but not used by the equation set.
  double r_x = 0, r_y = 0;

  static ReachabilityParams from_geometry(double h_n, double h_c, double w_x, double w_y) {
    ReachabilityParams p;
    p.h_n = h_n;
    p.h_c = h_c;
    p.w_x = w_x;
    p.w_y = w_y;
    if (!(h_n > 0.0) || !(h_c > 0.0) || !(w_x > 0.0) || !(w_y > 0.0) || h_c > w_x || h_c > w_y)
      throw Error(ErrorCode::kInvalidGeometry, "reachability needs 0 < h_c <= w_x, w_y and h_n > 0");
    p.alpha_x = std::asin(h_c / w_x);
    p.alpha_y = std::asin(h_c / w_y);
    p.q_x = std::tan(p.alpha_y) * h_n / h_c;
    p.q_y = std::tan(p.alpha_x) * h_n / h_c;
    p.r_x = 0.5 * p.alpha_x / h_c;
    p.r_y = 0.5 * p.alpha_y / h_c;
    p.d_x = 0.5 * w_x;
    p.d_y = 0.5 * w_y;
    return p;
  }

  /// Inter-foot distances taken from the robot's nominal stance.
  static ReachabilityParams for_robot(const RobotParams& robot, double h_c) {
    const auto& s = robot.nominal_stance;
    const double w_x = std::abs(s[index(Leg::LF)].x() - s[index(Leg::LH)].x());
    const double w_y = std::abs(s[index(Leg::LF)].y() - s[index(Leg::RF)].y());
    return from_geometry(robot.nominal_height, h_c, w_x, w_y);
  }
};

/// Least-squares posture system A x = b and its quadratic form.
struct ReachabilityTerm {
  Eigen::Matrix<double, 6, kStateDim> A = Eigen::Matrix<double, 6, kStateDim>::Zero();
  Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
  StateMatrix Q_h = StateMatrix::Zero();
  StateVector x_h = StateVector::Zero();
};

/// Builds the six posture equations relating base pose to foot positions and converts them to (Q_h, x_h).
/// Legs enter in the order LF, RF, LH, RH.
inline ReachabilityTerm build_reachability(const ReachabilityParams& params) {
  ReachabilityTerm term;
  auto& A = term.A;
  const auto foot = [](int leg, int axis) { return kBaseDim + 3 * leg + axis; };
  // Height patterns: hind minus front, and left minus right.
  const std::array<double, kLegCount> front_back{-1, -1, 1, 1};
  const std::array<double, kLegCount> left_right{1, -1, 1, -1};

  A(0, 0) = 1.0;
  A(1, 1) = 1.0;
  A(2, 2) = 1.0;
  for (int i = 0; i < kLegCount; ++i) {
    A(0, foot(i, 0)) = -0.25;
    A(0, foot(i, 2)) = -0.5 * params.d_x * front_back[i];
    A(1, foot(i, 1)) = -0.25;
    A(1, foot(i, 2)) = -0.5 * params.d_y * left_right[i];
    A(2, foot(i, 2)) = -0.25;
    A(3, foot(i, 2)) = -params.q_x * left_right[i];
    A(4, foot(i, 2)) = -params.q_y * front_back[i];
  }
  A(3, 3) = 1.0;
  A(4, 4) = 1.0;
  A(5, 5) = 1.0;
  term.b(2) = params.h_n;

  term.Q_h = A.transpose() * A;
  Eigen::CompleteOrthogonalDecomposition<StateMatrix> cod;
  cod.setThreshold(1e-10);
  cod.compute(term.Q_h);
  term.x_h = cod.solve(StateVector(A.transpose() * term.b));
  return term;
}

/// Gradient and Hessian of a running cost; the cross term is zero since costs are separable in x and u.
struct CostDerivatives {
  StateVector grad_x;
  InputVector grad_u;
  StateMatrix hess_xx;
  Eigen::Matrix<double, kInputDim, kInputDim> hess_uu;
};

/// Quadratic tracking, reachability and effort costs.
class CostModel {
 public:
  CostModel() = default;
  CostModel(const CostWeights& weights, const ReferenceStates& refs, const StateMatrix& reach_weight)
      : q_running_(weights.q_running()), q_final_(weights.q_final), r_(weights.r_input()), refs_(refs),
        q_reach_(weights.w_reach * reach_weight) {}

  CostModel(const CostWeights& weights, const ReferenceStates& refs, const ReachabilityTerm& reach)
      : CostModel(weights, with_reach(refs, reach), reach.Q_h) {}

  /// x_d~' Q_d x_d~ + x_h~' Q_h x_h~ + u' R u
  double running_cost(const StateVector& x, const InputVector& u) const {
    const StateVector dd = refs_.running - x;
    const StateVector dh = refs_.reach - x;
    return dd.dot(q_running_.cwiseProduct(dd)) + dh.dot(q_reach_ * dh) + u.dot(r_.cwiseProduct(u));
  }

  double final_cost(const StateVector& x) const {
    const StateVector df = refs_.final_state - x;
    return df.dot(q_final_.cwiseProduct(df));
  }

  CostDerivatives quadratize(const StateVector& x, const InputVector& u) const {
    CostDerivatives d;
    d.grad_x = 2.0 * q_running_.cwiseProduct(x - refs_.running) + 2.0 * q_reach_ * (x - refs_.reach);
    d.grad_u = 2.0 * r_.cwiseProduct(u);
    d.hess_xx = StateMatrix(2.0 * q_reach_);
    d.hess_xx.diagonal() += 2.0 * q_running_;
    d.hess_uu = (2.0 * r_).asDiagonal();
    return d;
  }

  std::pair<StateVector, StateMatrix> quadratize_final(const StateVector& x) const {
    StateMatrix h = (2.0 * q_final_).asDiagonal();
    return {StateVector(2.0 * q_final_.cwiseProduct(x - refs_.final_state)), h};
  }

  const ReferenceStates& references() const { return refs_; }
  const StateVector& running_weights() const { return q_running_; }
  const StateVector& final_weights() const { return q_final_; }
  const StateMatrix& reach_weight() const { return q_reach_; }

 private:
  static ReferenceStates with_reach(ReferenceStates refs, const ReachabilityTerm& reach) {
    refs.reach = reach.x_h;
    return refs;
  }

  StateVector q_running_ = StateVector::Zero();
  StateVector q_final_ = StateVector::Zero();
  InputVector r_ = InputVector::Zero();
  ReferenceStates refs_;
  StateMatrix q_reach_ = StateMatrix::Zero();
};

}  // namespace quadplan
