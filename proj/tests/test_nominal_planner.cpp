#include <gtest/gtest.h>

#include "quadplan/nominal_planner.hpp"

using namespace quadplan;

namespace {

RobotState start_state(double x = 0.0, double ground = 0.0) {
  return RobotState::standing(RobotParams::defaults(), Vec3(x, 0.0, ground + 0.45));
}

Terrain gap_terrain() {
  Terrain t;
  t.planes.push_back(ContactPlane::horizontal("near", 0.0, Rect{Vec2(-5, -5), Vec2(1.0, 5)}));
  t.planes.push_back(ContactPlane::horizontal("far", 0.10, Rect{Vec2(1.3, -5), Vec2(6, 5)}));
  t.gaps.push_back(GapVolume{"gap", Vec3(1.0, -5, -1), Vec3(1.3, 5, 0.1)});
  return t;
}

}  // namespace

TEST(NominalPlanner, FlatStepAlongHeading) {
  const auto x0 = start_state();
  TaskGoal goal;
  goal.step_length = 0.15;
  const auto seq = generate_nominal_sequence(x0, goal, GaitSchedule::walking(), Terrain::flat());
  ASSERT_EQ(seq.phase_count(), 5);
  const Vec3 rh0 = x0.foot_position(Leg::RH);
  const Vec3 rh = seq.footholds[2][index(Leg::RH)];
  EXPECT_LT((rh - rh0 - Vec3(0.15, 0, 0)).norm(), 1e-12);
  EXPECT_DOUBLE_EQ(rh.z(), 0.0);
  // Base moves half a step per swing phase, at the desired height over the support.
  const RobotState final_state(seq.final_state());
  EXPECT_NEAR(final_state.base_position().x(), 0.15, 1e-12);
  EXPECT_NEAR(final_state.base_position().z(), 0.45, 1e-12);
  EXPECT_LT(RobotState(seq.states[3]).base_linear_velocity().norm(), 1e-15);
}

TEST(NominalPlanner, ProjectOntoBoxTop) {
  Terrain t = Terrain::flat();
  t.boxes.push_back(BoxObstacle{"box", Vec2(0.5, 0.0), Vec2(0.4, 0.4), 0.0, 0.15});
  const auto p = project_to_surface(Vec3(0.5, 0.05, 0.3), t);
  ASSERT_FALSE(p.in_gap);
  EXPECT_DOUBLE_EQ(p.point.z(), 0.15);
  EXPECT_EQ(p.plane.id, "box");

  const auto x0 = start_state();
  TaskGoal goal;
  goal.step_length = 0.15;
  Terrain under_rf = Terrain::flat();
  under_rf.boxes.push_back(BoxObstacle{"box", Vec2(0.45, -0.2), Vec2(0.4, 0.4), 0.0, 0.15});
  const auto seq = generate_nominal_sequence(x0, goal, GaitSchedule::walking(), under_rf);
  EXPECT_DOUBLE_EQ(seq.final_state()[kBaseDim + 3 * index(Leg::RF) + 2], 0.15);
  EXPECT_EQ(seq.planes.back()[index(Leg::RF)].id, "box");
}

TEST(NominalPlanner, VerticalProjectionKeepsXY) {
  const auto p = project_to_surface(Vec3(0.5, 0.1, 0.37), Terrain::flat());
  EXPECT_EQ(p.point, Vec3(0.5, 0.1, 0.0));
}

TEST(NominalPlanner, EdgeMarginShiftsInward) {
  Terrain t;
  t.planes.push_back(ContactPlane::horizontal("ground", 0.0, Rect{Vec2(-1, -1), Vec2(1, 1)}));
  t.boxes.push_back(BoxObstacle{"box", Vec2(0.5, 0.0), Vec2(0.4, 0.4), 0.0, 0.15});
  // 0.01 m inside the box's +x edge at x = 0.7.
  const auto on_box = project_to_surface(Vec3(0.69, 0.0, 0.0), t);
  EXPECT_NEAR(on_box.point.x(), 0.67, 1e-12);
  EXPECT_DOUBLE_EQ(on_box.point.z(), 0.15);
  // 0.01 m outside the same edge on the lower ground: pushed away from the box.
  const auto beside = project_to_surface(Vec3(0.71, 0.0, 0.0), t);
  EXPECT_NEAR(beside.point.x(), 0.73, 1e-12);
  EXPECT_DOUBLE_EQ(beside.point.z(), 0.0);
  // Near the ground plane's own edge.
  const auto edge = project_to_surface(Vec3(-0.99, 0.2, 0.0), t);
  EXPECT_NEAR(edge.point.x(), -0.97, 1e-12);
}

TEST(NominalPlanner, GapSignalAndRule) {
  const Terrain t = gap_terrain();
  EXPECT_TRUE(project_to_surface(Vec3(1.15, 0, 0), t).in_gap);
  const auto& gap = t.gaps[0];
  const double m = FootholdSettings{}.edge_margin;
  const Vec3 start(0.9, 0.1, 0.0);
  EXPECT_NEAR(resolve_gap(Vec3(1.20, 0.1, 0), start, gap).x(), 1.30 + m, 1e-12);
  EXPECT_NEAR(resolve_gap(Vec3(1.10, 0.1, 0), start, gap).x(), 1.00 - m, 1e-12);
  EXPECT_NEAR(resolve_gap(Vec3(1.15, 0.1, 0), start, gap).x(), 1.00 - m, 1e-12);
  // 60% coverage lands on the far, higher plane.
  const auto placed = place_foothold(Vec3(1.18, 0.1, 0), start, t);
  EXPECT_NEAR(placed.point.x(), 1.30 + m, 1e-12);
  EXPECT_NEAR(placed.point.z(), 0.10, 1e-12);
  EXPECT_EQ(placed.plane.id, "far");
}

TEST(NominalPlanner, GapRuleIsIdempotent) {
  const Terrain t = gap_terrain();
  const Vec3 start(0.9, 0.0, 0.0);
  for (double x : {1.05, 1.12, 1.2, 1.28}) {
    const Vec3 once = resolve_gap(Vec3(x, 0, 0), start, t.gaps[0]);
    EXPECT_EQ(resolve_gap(once, start, t.gaps[0]), once);
  }
}

TEST(NominalPlanner, NoSurfaceOnEitherSideOfGap) {
  Terrain t;
  t.planes.push_back(ContactPlane::horizontal("island", 0.0, Rect{Vec2(0.5, -1), Vec2(0.9, 1)}));
  t.gaps.push_back(GapVolume{"gap", Vec3(1.0, -1, -1), Vec3(1.3, 1, 0)});
  try {
    place_foothold(Vec3(1.2, 0, 0), Vec3(0.2, 0, 0), t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoPlaneFound);
  }
}

TEST(NominalPlanner, FootholdsOnPlanesAndMonotone) {
  const Terrain t = gap_terrain();
  TaskGoal goal;
  goal.step_length = 0.27;
  auto schedule = GaitSchedule::walking();
  auto x = start_state(0.55);
  double last_x = -1e9;
  for (int replan = 0; replan < 6; ++replan) {
    const auto seq = generate_nominal_sequence(x, goal, schedule, t);
    for (int k = 0; k < static_cast<int>(seq.states.size()); ++k) {
      const RobotState s(seq.states[k]);
      for (int i = 0; i < kLegCount; ++i) {
        EXPECT_LT(std::abs(seq.planes[k][i].residual(seq.footholds[k][i])), 1e-9);
        EXPECT_FALSE(t.gap_at(seq.footholds[k][i].head<2>()));
      }
      if (k > 0) EXPECT_GE(s.base_position().x(), RobotState(seq.states[k - 1]).base_position().x());
      if (k > 0)
        EXPECT_LE((s.base_position() - RobotState(seq.states[k - 1]).base_position()).head<2>().norm(),
                  goal.step_length + 1e-12);
    }
    // Moved footholds keep the clearance margin inside their plane bounds.
    for (int i = 0; i < kLegCount; ++i) {
      const auto& f = seq.footholds.back()[i];
      if (f == x.foot_position(i)) continue;
      const auto& plane = seq.planes.back()[i];
      ASSERT_TRUE(plane.bounds.has_value());
      EXPECT_GE(plane.bounds->inner_distance(f.head<2>()), 0.03 - 1e-12);
    }
    const RobotState next(seq.states[2]);
    EXPECT_GT(next.base_position().x(), last_x);
    last_x = next.base_position().x();
    x = next;
    schedule = advance_horizon(schedule);
  }
}

TEST(NominalPlanner, BaseHeightOverMixedSupport) {
  const Terrain t = gap_terrain();
  Footholds feet{Vec3(1.4, 0.2, 0.1), Vec3(1.4, -0.2, 0.1), Vec3(0.8, 0.2, 0.0), Vec3(0.8, -0.2, 0.0)};
  EXPECT_NEAR(support_height(feet, Vec2(1.1, 0.0)), 0.05, 1e-12);
  TaskGoal bad;
  bad.step_length = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}
