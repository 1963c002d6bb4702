#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>

#include "quadplan/gait_schedule.hpp"

using namespace quadplan;

namespace {

GaitSchedule make(std::vector<GaitPhase> phases, double dt) {
  GaitSchedule s;
  s.phases = std::move(phases);
  s.dt = dt;
  return s;
}

std::map<PhaseConfig, int> config_counts(const GaitSchedule& s) {
  std::map<PhaseConfig, int> counts;
  for (const auto& p : s.phases) ++counts[p.config];
  return counts;
}

}  // namespace

TEST(GaitSchedule, WalkingWindowNodeCount) {
  const auto s = GaitSchedule::walking(0.02);
  ASSERT_EQ(s.horizon(), 5);
  const std::vector<PhaseConfig> expected{PhaseConfig::F, PhaseConfig::RH, PhaseConfig::F, PhaseConfig::RF,
                                          PhaseConfig::F};
  const std::vector<double> durations{0.3, 0.3, 0.25, 0.3, 0.3};
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(s.phases[i].config, expected[i]);
    EXPECT_DOUBLE_EQ(s.phases[i].duration, durations[i]);
  }
  EXPECT_NEAR(s.duration(), 1.45, 1e-12);
  const auto grid = build_node_grid(s);
  EXPECT_EQ(grid.node_count(), 73);
  for (int k = 0; k < grid.node_count(); ++k) {
    const double t = grid.times[k];
    const bool rh_swing = t > 0.30 + 1e-9 && t < 0.60 + 1e-9;
    EXPECT_EQ(grid.contact[k][index(Leg::RH)], !rh_swing) << "node " << k;
    EXPECT_TRUE(grid.contact[k][index(Leg::LF)]);
    EXPECT_TRUE(grid.contact[k][index(Leg::LH)]);
  }
  EXPECT_TRUE(grid.is_touchdown_node(30, index(Leg::RH)));
  EXPECT_FALSE(grid.is_touchdown_node(29, index(Leg::RH)));
}

TEST(GaitSchedule, SingleStancePhase) {
  const auto grid = build_node_grid(make({{PhaseConfig::F, 0.1}}, 0.02));
  ASSERT_EQ(grid.node_count(), 6);
  for (const auto& flags : grid.contact)
    for (bool f : flags) EXPECT_TRUE(f);
}

TEST(GaitSchedule, SnapsToNearestNodeAgainstEnumeration) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dur(0.05, 0.4);
  std::uniform_int_distribution<int> cfg(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<GaitPhase> phases;
    const int n = 1 + trial % 6;
    for (int i = 0; i < n; ++i) phases.push_back({static_cast<PhaseConfig>(cfg(rng)), dur(rng)});
    const double dt = 0.02;
    const auto grid = build_node_grid(make(phases, dt));
    double total = 0.0;
    for (const auto& p : phases) total += p.duration;
    EXPECT_EQ(grid.node_count(), static_cast<int>(std::lround(total / dt)) + 1);

    // Each node belongs to the first phase whose end time lies within half a step after it.
    for (int k = 0; k < grid.node_count(); ++k) {
      const double t = k * dt;
      double end = 0.0;
      int expected = n - 1;
      for (int j = 0; j < n; ++j) {
        end += phases[j].duration;
        if (k > 0 && t <= end + 0.5 * dt - 1e-12) {
          expected = j;
          break;
        }
        if (k == 0) {
          expected = 0;
          break;
        }
      }
      EXPECT_EQ(grid.phase_index[k], expected) << "trial " << trial << " node " << k;
      EXPECT_EQ(grid.contact[k], contact_flags(phases[expected].config));
    }
  }
}

TEST(GaitSchedule, PhaseShorterThanDtRejected) {
  try {
    build_node_grid(make({{PhaseConfig::F, 0.3}, {PhaseConfig::LF, 0.01}}, 0.02));
    FAIL() << "expected a phase-too-short error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPhaseTooShort);
  }
}

TEST(GaitSchedule, ExactlyOneSwingLegOutsideFourFeetPhases) {
  for (int c = 0; c < 5; ++c) {
    const auto flags = contact_flags(static_cast<PhaseConfig>(c));
    const int swings = static_cast<int>(std::count(flags.begin(), flags.end(), false));
    EXPECT_EQ(swings, c == 4 ? 0 : 1);
    if (c < 4) EXPECT_FALSE(flags[c]);
  }
}

TEST(GaitSchedule, AdvanceFollowsCycle) {
  const auto s0 = GaitSchedule::walking();
  const auto s1 = advance_horizon(s0);
  const std::vector<PhaseConfig> expected{PhaseConfig::F, PhaseConfig::RF, PhaseConfig::F, PhaseConfig::LH,
                                          PhaseConfig::F};
  ASSERT_EQ(s1.horizon(), 5);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(s1.phases[i].config, expected[i]);
  EXPECT_DOUBLE_EQ(s1.phases[0].duration, 0.25);
  EXPECT_DOUBLE_EQ(s1.phases[3].duration, 0.3);
  EXPECT_DOUBLE_EQ(s1.phases[4].duration, 0.25);

  const auto s2 = advance_horizon(s1);
  EXPECT_EQ(s2.phases[1].config, PhaseConfig::LH);
  EXPECT_EQ(s2.phases[3].config, PhaseConfig::LF);
}

TEST(GaitSchedule, AdvancePreservesHorizonAndReturnsAfterFullCycle) {
  const auto s0 = GaitSchedule::walking();
  auto s = s0;
  for (int i = 0; i < 20; ++i) {
    s = advance_horizon(s);
    EXPECT_EQ(s.horizon(), s0.horizon());
    const auto counts = config_counts(s);
    EXPECT_EQ(counts.at(PhaseConfig::F), 3);
    EXPECT_EQ(counts.size(), 3u);
    for (const auto& p : s.phases)
      EXPECT_NE(std::find(s.cycle.begin(), s.cycle.end(), p), s.cycle.end()) << "durations come from the cycle";
  }
  s = s0;
  for (int i = 0; i < 4; ++i) s = advance_horizon(s);
  EXPECT_EQ(s.phases, s0.phases);
  EXPECT_EQ(s.cursor, s0.cursor);
}

TEST(GaitSchedule, AdvanceWithEmptyCycleRejected) {
  auto s = GaitSchedule::walking();
  s.cycle.clear();
  EXPECT_THROW(advance_horizon(s), Error);
}

TEST(GaitSchedule, ParseConfigRoundTrip) {
  for (int c = 0; c < 5; ++c) {
    const auto cfg = static_cast<PhaseConfig>(c);
    EXPECT_EQ(parse_config(config_name(cfg)), cfg);
  }
  EXPECT_THROW(parse_config("XX"), Error);
}
