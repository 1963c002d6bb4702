#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "quadplan/config.hpp"
#include "quadplan/contact_constraints.hpp"
#include "quadplan/gait_schedule.hpp"
#include "quadplan/locomotion_problem.hpp"
#include "quadplan/rigid_body_model.hpp"
#include "quadplan/slq_solver.hpp"
#include "quadplan/swing_generator.hpp"

namespace quadplan::sim {

/// A solved plan as handed to the tracker, anchored at a control tick.
struct Plan {
  int id = 0;
  std::int64_t origin_tick = 0;
  int ticks_per_node = 1;
  GaitSchedule schedule;
  NodeGrid grid;
  std::vector<StateVector> x;
  std::vector<InputVector> u;
  std::vector<LegPlanes> phase_planes;
  std::vector<SphereObstacle> spheres;
  FrictionModel friction;
  /// Swing splines indexed by phase; empty for four-feet phases.
  std::vector<std::optional<SwingSpline>> swings;

  int interval_count() const { return static_cast<int>(u.size()); }
  std::int64_t end_tick() const { return origin_tick + static_cast<std::int64_t>(interval_count()) * ticks_per_node; }

  int phase_start_node(int j) const { return j > 0 ? grid.phase_end[j - 1] : 0; }

  /// Tick at which the swing of phase j touches down.
  std::int64_t touchdown_tick(int j) const { return origin_tick + static_cast<std::int64_t>(grid.phase_end[j]) * ticks_per_node; }

  /// Phase index of the swing that touches down at `tick`, if any.
  std::optional<int> touchdown_at(std::int64_t tick) const {
    for (int j = 0; j < static_cast<int>(schedule.phases.size()); ++j)
      if (swing_leg(schedule.phases[j].config) && touchdown_tick(j) == tick) return j;
    return std::nullopt;
  }

  /// Number of swings up to and including phase j.
  int swing_ordinal(int j) const {
    int n = 0;
    for (int i = 0; i <= j; ++i) n += swing_leg(schedule.phases[i].config) ? 1 : 0;
    return n;
  }

  /// Start of the first swing, after which a freshly solved plan can no longer take over cleanly.
  std::int64_t first_liftoff_tick() const {
    for (int j = 0; j < static_cast<int>(schedule.phases.size()); ++j)
      if (swing_leg(schedule.phases[j].config)) return origin_tick + static_cast<std::int64_t>(phase_start_node(j)) * ticks_per_node;
    return end_tick();
  }

  /// Node ranges of the first and second planned steps, each ending at its touchdown.
  std::vector<std::pair<int, int>> step_ranges() const {
    std::vector<std::pair<int, int>> out;
    int start = 0;
    for (int j = 0; j < static_cast<int>(schedule.phases.size()); ++j) {
      if (!swing_leg(schedule.phases[j].config)) continue;
      out.emplace_back(start, grid.phase_end[j]);
      start = grid.phase_end[j];
    }
    return out;
  }
};

inline std::shared_ptr<Plan> make_plan(int id, std::int64_t origin_tick, int ticks_per_node, const GaitSchedule& schedule,
                                       const LocomotionProblem& problem, const Trajectory& traj, double swing_apex) {
  auto plan = std::make_shared<Plan>();
  plan->id = id;
  plan->origin_tick = origin_tick;
  plan->ticks_per_node = ticks_per_node;
  plan->schedule = schedule;
  plan->grid = problem.grid();
  for (const auto& v : traj.x) plan->x.emplace_back(v);
  for (const auto& v : traj.u) plan->u.emplace_back(v);
  plan->phase_planes = problem.nominal().planes;
  plan->spheres = problem.constraint_sets().front().obstacles;
  plan->friction = problem.setup().friction;
  const double dt = schedule.dt;
  for (int j = 0; j < static_cast<int>(schedule.phases.size()); ++j) {
    const auto leg = swing_leg(schedule.phases[j].config);
    if (!leg) {
      plan->swings.emplace_back();
      continue;
    }
    const int k0 = plan->phase_start_node(j), k1 = plan->grid.phase_end[j];
    const Vec3 p0 = RobotState(plan->x[k0]).foot_position(*leg);
    const Vec3 p1 = RobotState(plan->x[k1]).foot_position(*leg);
    plan->swings.emplace_back(SwingSpline(p0, p1, (k1 - k0) * dt, swing_apex));
  }
  return plan;
}

struct TrackerOutput {
  RobotState next;
  ControlInput applied;
  ContactFlags stance{true, true, true, true};
  std::array<double, kLegCount> planned_fz{};
};

/// Pulls a force back into the plane's friction pyramid (the one the planner uses) by shrinking its tangential part,
/// then caps 0 <= lambda_z <= force_max.
inline Vec3 project_to_friction_pyramid(const Vec3& lambda, const ContactPlane& plane, const FrictionModel& friction) {
  const Vec3& n = plane.normal;
  const double ln = std::max(0.0, lambda.dot(n));
  Vec3 lt = lambda - lambda.dot(n) * n;
  const double inscribed = friction.mu * std::cos(std::numbers::pi / friction.face_count);
  const auto faces = friction_pyramid_matrix(friction, plane);
  // Each face row is (direction - inscribed n), so its tangential reach is row . lt against inscribed * ln.
  const double reach = (faces * lt).maxCoeff();
  if (reach > inscribed * ln) lt *= reach > 0.0 ? inscribed * ln / reach : 0.0;
  Vec3 out = ln * n + lt;
  if (out.z() < 0.0) out.setZero();
  if (out.z() > friction.force_max) out *= friction.force_max / out.z();
  return out;
}

/// One control tick: plan feedforward plus a task-space PD wrench on the stance legs, spline-following swing feet.
inline TrackerOutput track_interval(const Plan& plan, const RobotState& state, const TrackerGains& gains,
                                    const RobotParams& robot, double control_dt, std::int64_t tick) {
  const std::int64_t rel = std::clamp<std::int64_t>(tick - plan.origin_tick, 0, plan.end_tick() - plan.origin_tick);
  const int n = plan.interval_count();
  const int k = static_cast<int>(std::min<std::int64_t>(rel / plan.ticks_per_node, n - 1));
  const double a = static_cast<double>(rel - static_cast<std::int64_t>(k) * plan.ticks_per_node) / plan.ticks_per_node;
  const RobotState ref(((1.0 - a) * plan.x[k] + a * plan.x[k + 1]).eval());
  const ControlInput ff(plan.u[k]);
  const ContactFlags stance = plan.grid.contact[k + 1];
  const int phase = plan.grid.phase_index[k + 1];
  const auto& planes = plan.phase_planes[phase + 1];

  TrackerOutput out;
  out.stance = stance;
  const Vec3 p = state.base_position();
  const Mat3 rot = euler_xyz_rotation(state.base_orientation());
  Eigen::Matrix<double, 6, 1> wrench;
  wrench.head<3>() = robot.mass * (gains.position_stiffness.cwiseProduct(ref.base_position() - p) +
                                   gains.position_damping.cwiseProduct(ref.base_linear_velocity() -
                                                                       state.base_linear_velocity()));
  wrench.tail<3>() = rot * (robot.inertia * (gains.orientation_stiffness.cwiseProduct(ref.base_orientation() -
                                                                                      state.base_orientation()) +
                                             gains.orientation_damping.cwiseProduct(ref.base_angular_velocity() -
                                                                                    state.base_angular_velocity())));
  std::vector<int> legs;
  for (int i = 0; i < kLegCount; ++i)
    if (stance[i]) legs.push_back(i);
  VectorXd correction = VectorXd::Zero(3 * static_cast<int>(legs.size()));
  if (!legs.empty() && wrench.squaredNorm() > 0.0) {
    MatrixXd G(6, 3 * legs.size());
    for (std::size_t c = 0; c < legs.size(); ++c) {
      G.block<3, 3>(0, 3 * c).setIdentity();
      G.block<3, 3>(3, 3 * c) = skew(Vec3(state.foot_position(legs[c])) - p);
    }
    const MatrixXd gram = G * G.transpose() + gains.regularization * MatrixXd::Identity(6, 6);
    correction = G.transpose() * gram.ldlt().solve(wrench);
  }

  ControlInput u;
  for (std::size_t c = 0; c < legs.size(); ++c) {
    const int i = legs[c];
    const Vec3 lambda = Vec3(ff.contact_force(i)) + correction.segment<3>(3 * c);
    u.contact_force(i) = project_to_friction_pyramid(lambda, planes[i], plan.friction);
    out.planned_fz[i] = ff.contact_force(i).z();
  }
  for (int i = 0; i < kLegCount; ++i) {
    if (stance[i]) continue;
    const auto& spline = plan.swings[phase];
    if (!spline || swing_leg(plan.schedule.phases[phase].config) != kAllLegs[i]) continue;
    const double t0 = static_cast<double>(rel - static_cast<std::int64_t>(plan.phase_start_node(phase)) * plan.ticks_per_node) * control_dt;
    const double t1 = std::min(t0 + control_dt, spline->duration());
    const Vec3 s0 = spline->evaluate(std::clamp(t0, 0.0, spline->duration())).position;
    const Vec3 s1 = spline->evaluate(t1).position;
    u.foot_velocity(i) = (s1 - s0) / control_dt +
                         gains.swing_stiffness.cwiseProduct(s0 - Vec3(state.foot_position(i)));
  }
  out.applied = u;
  out.next = integrate_step(state, u, control_dt, robot);
  return out;
}

}  // namespace quadplan::sim
