// Solves one gait window on flat ground and prints the planned footholds.
#include <cstdio>

#include "quadplan/locomotion_problem.hpp"

using namespace quadplan;

int main() {
  LocomotionSetup setup;
  setup.goal.step_length = 0.15;
  const RobotState x0 = RobotState::standing(setup.robot, Vec3(0, 0, 0.45));
  const GaitSchedule gait = GaitSchedule::walking(0.02, 2);
  const LocomotionProblem problem(x0, gait, Terrain::flat(), setup);

  const auto sol = solve(problem);
  std::printf("%s after %d iterations, cost %.4f\n", status_name(sol.status), sol.iterations, sol.cost);
  std::printf("max equality %.1e, inequality %.1e, defect %.1e\n", sol.max_equality_residual(),
              sol.max_inequality_violation(), sol.max_defect());

  const auto& grid = problem.grid();
  for (std::size_t j = 0; j < gait.phases.size(); ++j) {
    const auto leg = swing_leg(gait.phases[j].config);
    if (!leg) continue;
    const int k = grid.phase_end[j];
    const RobotState x(StateVector(sol.trajectory.x[k]));
    const Vec3 foot = x.foot_position(*leg);
    std::printf("%s touches down at t=%.2f s: [%.3f %.3f %.3f]\n", leg_name(*leg).data(), grid.times[k], foot.x(),
                foot.y(), foot.z());
  }
  const RobotState end(StateVector(sol.trajectory.x.back()));
  std::printf("base ends at [%.3f %.3f %.3f]\n", end.base_position().x(), end.base_position().y(),
              end.base_position().z());
  return sol.converged() ? 0 : 1;
}
