#pragma once

#include <vector>

#include "quadplan/contact_constraints.hpp"
#include "quadplan/cost_model.hpp"
#include "quadplan/gait_schedule.hpp"
#include "quadplan/nominal_planner.hpp"
#include "quadplan/rigid_body_model.hpp"
#include "quadplan/slq_solver.hpp"

namespace quadplan {

struct LocomotionSetup {
  RobotParams robot = RobotParams::defaults();
  FrictionModel friction = FrictionModel::for_robot(RobotParams::defaults());
  CostWeights weights = CostWeights::flat_walk_defaults();
  TaskGoal goal;
  FootholdSettings footholds;
  /// Altered base height of the tilted reference stance.
  double reach_height = 0.3;
};

/// Per-node constraint switches: stance of the leaving interval, plane equalities at touchdown nodes, sphere
/// clearance for swinging feet. phase_planes[j + 1] holds the surfaces in use at the end of phase j.
inline std::vector<PhaseConstraintSet> build_constraint_sets(const NodeGrid& grid,
                                                             const std::vector<LegPlanes>& phase_planes,
                                                             const FrictionModel& friction,
                                                             const std::vector<SphereObstacle>& spheres) {
  const int N = grid.node_count() - 1;
  if (static_cast<int>(phase_planes.size()) != static_cast<int>(grid.phase_end.size()) + 1)
    throw Error(ErrorCode::kDimensionMismatch, "need one set of planes per phase plus the initial one");
  std::vector<PhaseConstraintSet> sets(N + 1);
  for (int k = 0; k <= N; ++k) {
    auto& set = sets[k];
    set.stance = grid.contact[k < N ? k + 1 : k];
    set.friction = friction;
    set.obstacles = spheres;
    const int phase = grid.phase_index[k];
    for (int i = 0; i < kLegCount; ++i) {
      set.planes[i] = phase_planes[phase + 1][i];
      set.plane_active[i] = grid.is_touchdown_node(k, i);
      set.obstacle_active[i] = !grid.contact[k][i];
    }
  }
  return sets;
}

/// Reduced-model locomotion problem over one gait window, built around the nominal sequence.
class LocomotionProblem {
 public:
  LocomotionProblem(const RobotState& x0, const GaitSchedule& schedule, const Terrain& terrain,
                    const LocomotionSetup& setup)
      : setup_(setup), x0_(x0.vector()), grid_(build_node_grid(schedule)), dt_(schedule.dt) {
    setup_.robot.validate();
    setup_.friction.validate();
    setup_.weights.validate();
    nominal_ = generate_nominal_sequence(x0, setup_.goal, schedule, terrain, setup_.footholds);
    const auto& s = setup_.robot.nominal_stance;
    const double w_x = std::abs(s[index(Leg::LF)].x() - s[index(Leg::LH)].x());
    const double w_y = std::abs(s[index(Leg::LF)].y() - s[index(Leg::RF)].y());
    reach_ = build_reachability(
        ReachabilityParams::from_geometry(setup_.goal.base_height, setup_.reach_height, w_x, w_y));
    ReferenceStates refs;
    refs.running = nominal_.final_state();
    refs.final_state = nominal_.final_state();
    cost_ = CostModel(setup_.weights, refs, reach_);

    sets_ = build_constraint_sets(grid_, nominal_.planes, setup_.friction, terrain.spheres);
  }

  int node_count() const { return grid_.node_count(); }
  VectorXd initial_state() const { return x0_; }

  VectorXd next_state(int, const VectorXd& x, const VectorXd& u) const {
    return integrate_step(RobotState(StateVector(x)), ControlInput(InputVector(u)), dt_, setup_.robot).vector();
  }

  StepLinearization step(int, const VectorXd& x, const VectorXd& u) const {
    const auto d = integrate_step_with_jacobians(RobotState(StateVector(x)), ControlInput(InputVector(u)), dt_,
                                                 setup_.robot);
    return {d.next.vector(), d.A, d.B};
  }

  double stage_cost(int, const VectorXd& x, const VectorXd& u) const {
    return dt_ * cost_.running_cost(StateVector(x), InputVector(u));
  }
  double terminal_cost(const VectorXd& x) const { return cost_.final_cost(StateVector(x)); }

  StageCostQuadratic stage_quadratic(int, const VectorXd& x, const VectorXd& u) const {
    const auto d = cost_.quadratize(StateVector(x), InputVector(u));
    return {dt_ * d.hess_xx, MatrixXd::Zero(kInputDim, kStateDim), dt_ * d.hess_uu, dt_ * d.grad_x, dt_ * d.grad_u};
  }
  TerminalCostQuadratic terminal_quadratic(const VectorXd& x) const {
    auto [g, h] = cost_.quadratize_final(StateVector(x));
    return {h, g};
  }

  NodeConstraints stage_constraints(int k, const VectorXd& x, const VectorXd& u) const {
    return evaluate_node_constraints(x, u, sets_[k]);
  }
  NodeConstraints terminal_constraints(const VectorXd& x) const {
    return evaluate_node_constraints(RobotState(StateVector(x)), sets_.back());
  }

  /// Base interpolated toward the nominal final pose, feet on their nominal footholds (moving linearly while
  /// swinging), equal gravity-compensating forces on stance legs and zero foot velocities.
  Trajectory initial_guess() const {
    const int N = grid_.node_count() - 1;
    Trajectory t;
    t.x.resize(N + 1);
    t.u.resize(N);
    const RobotState start(x0_);
    const RobotState goal(nominal_.final_state());
    for (int k = 0; k <= N; ++k) {
      const double a = static_cast<double>(k) / N;
      RobotState x;
      x.vector().head<kBaseDim>() = (1 - a) * start.vector().head<kBaseDim>() + a * goal.vector().head<kBaseDim>();
      for (int i = 0; i < kLegCount; ++i) x.foot_position(i) = nominal_foot(k, i);
      t.x[k] = x.vector();
      if (k < N) {
        ControlInput u;
        const auto& stance = sets_[k].stance;
        const int n = static_cast<int>(std::count(stance.begin(), stance.end(), true));
        for (int i = 0; i < kLegCount; ++i)
          if (stance[i]) u.contact_force(i) = Vec3(0, 0, setup_.robot.weight() / n);
        t.u[k] = u.vector();
      }
    }
    t.x[0] = x0_;
    return t;
  }

  /// Foot position along the nominal footholds, interpolated across the swing.
  Vec3 nominal_foot(int k, int leg) const {
    const int j = grid_.phase_index[k];
    const Vec3& before = nominal_.footholds[j][leg];
    const Vec3& after = nominal_.footholds[j + 1][leg];
    if (grid_.contact[k][leg] || before == after) return after;
    const int start = j > 0 ? grid_.phase_end[j - 1] : 0;
    const int end = grid_.phase_end[j];
    const double a = static_cast<double>(k - start) / std::max(1, end - start);
    return (1 - a) * before + a * after;
  }

  /// Stance-foot plane residuals at every node, for auditing stored trajectories.
  double max_plane_residual(const Trajectory& t) const {
    double worst = 0.0;
    for (int k = 0; k < grid_.node_count(); ++k)
      for (int i = 0; i < kLegCount; ++i)
        if (grid_.contact[k][i])
          worst = std::max(worst, std::abs(sets_[k].planes[i].residual(RobotState(StateVector(t.x[k])).foot_position(i))));
    return worst;
  }

  const NodeGrid& grid() const { return grid_; }
  const NominalSequence& nominal() const { return nominal_; }
  const std::vector<PhaseConstraintSet>& constraint_sets() const { return sets_; }
  const CostModel& cost() const { return cost_; }
  const ReachabilityTerm& reachability() const { return reach_; }
  const LocomotionSetup& setup() const { return setup_; }
  double dt() const { return dt_; }

 private:
  LocomotionSetup setup_;
  StateVector x0_;
  NodeGrid grid_;
  double dt_;
  NominalSequence nominal_;
  ReachabilityTerm reach_;
  CostModel cost_;
  std::vector<PhaseConstraintSet> sets_;
};

static_assert(OptimalControlProblem<LocomotionProblem>);

}  // namespace quadplan
