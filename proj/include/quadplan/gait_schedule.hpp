#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quadplan/common.hpp"

namespace quadplan {

/// Stance configuration of a phase: the name of the single swinging leg, or F for four-feet stance.
enum class PhaseConfig : int { LF = 0, RF = 1, LH = 2, RH = 3, F = 4 };

constexpr std::optional<Leg> swing_leg(PhaseConfig c) {
  if (c == PhaseConfig::F) return std::nullopt;
  return static_cast<Leg>(static_cast<int>(c));
}

constexpr std::string_view config_name(PhaseConfig c) {
  return c == PhaseConfig::F ? std::string_view("F") : leg_name(static_cast<Leg>(static_cast<int>(c)));
}

inline PhaseConfig parse_config(std::string_view name) {
  if (name == "F") return PhaseConfig::F;
  for (Leg leg : kAllLegs)
    if (leg_name(leg) == name) return static_cast<PhaseConfig>(index(leg));
  throw Error(ErrorCode::kConfig, "unknown phase config '" + std::string(name) + "'");
}

using ContactFlags = std::array<bool, kLegCount>;

inline ContactFlags contact_flags(PhaseConfig c) {
  ContactFlags flags{true, true, true, true};
  if (auto leg = swing_leg(c)) flags[index(*leg)] = false;
  return flags;
}

struct GaitPhase {
  PhaseConfig config = PhaseConfig::F;
  double duration = 0.0;

  bool operator==(const GaitPhase&) const = default;
};

/// Phase window over the horizon plus the cyclic pattern it is extended from.
struct GaitSchedule {
  std::vector<GaitPhase> phases;
  double dt = 0.02;
  std::vector<GaitPhase> cycle;
  /// Index into cycle of the next phase to append.
  std::size_t cursor = 0;

  int horizon() const { return static_cast<int>(phases.size()); }

  double duration() const {
    double total = 0.0;
    for (const auto& p : phases) total += p.duration;
    return total;
  }

  void validate() const {
    if (phases.empty()) throw Error(ErrorCode::kInvalidArgument, "gait schedule has no phases");
    if (!(dt > 0.0)) throw Error(ErrorCode::kInvalidArgument, "gait dt must be positive");
    for (const auto& p : phases)
      if (!(p.duration > 0.0)) throw Error(ErrorCode::kInvalidArgument, "phase durations must be positive");
    for (const auto& p : cycle)
      if (!(p.duration > 0.0)) throw Error(ErrorCode::kInvalidArgument, "cycle durations must be positive");
  }

  /// Lateral walk RH, RF, LH, LF with four-feet phases in between, starting from a four-feet stance.
  static GaitSchedule walking(double dt = 0.02, int steps = 2) {
    if (steps < 1) throw Error(ErrorCode::kInvalidArgument, "horizon needs at least one step");
    GaitSchedule s;
    s.dt = dt;
    s.cycle = {{PhaseConfig::RH, 0.3}, {PhaseConfig::F, 0.25}, {PhaseConfig::RF, 0.3}, {PhaseConfig::F, 0.3},
               {PhaseConfig::LH, 0.3}, {PhaseConfig::F, 0.25}, {PhaseConfig::LF, 0.3}, {PhaseConfig::F, 0.3}};
    s.phases = {{PhaseConfig::F, 0.3}};
    for (int i = 0; i < 2 * steps; ++i) s.phases.push_back(s.cycle[static_cast<std::size_t>(i) % s.cycle.size()]);
    s.cursor = static_cast<std::size_t>(2 * steps) % s.cycle.size();
    return s;
  }
};

struct NodeGrid {
  double dt = 0.0;
  std::vector<double> times;
  std::vector<ContactFlags> contact;
  std::vector<int> phase_index;
  /// Last node of each phase after snapping; phase j covers nodes (phase_end[j-1], phase_end[j]].
  std::vector<int> phase_end;

  int node_count() const { return static_cast<int>(times.size()); }
  int interval_count() const { return node_count() - 1; }

  bool in_stance(int node, int leg) const { return contact[node][leg]; }

  /// Last swing node of a leg before it touches down at node + 1.
  bool is_touchdown_node(int node, int leg) const {
    return node + 1 < node_count() && !contact[node][leg] && contact[node + 1][leg];
  }
};

/// Samples the schedule on a uniform grid; node k takes the phase whose snapped window (start, end] contains it.
inline NodeGrid build_node_grid(const GaitSchedule& schedule) {
  schedule.validate();
  NodeGrid grid;
  grid.dt = schedule.dt;
  double elapsed = 0.0;
  int previous = 0;
  for (const auto& phase : schedule.phases) {
    if (phase.duration < schedule.dt * (1.0 - 1e-9))
      throw Error(ErrorCode::kPhaseTooShort, "phase shorter than the sampling interval");
    elapsed += phase.duration;
    const int end = static_cast<int>(std::nearbyint(elapsed / schedule.dt));
    if (end <= previous) throw Error(ErrorCode::kPhaseTooShort, "phase collapses after snapping to the grid");
    grid.phase_end.push_back(end);
    previous = end;
  }
  const int nodes = grid.phase_end.back() + 1;
  grid.times.resize(nodes);
  grid.contact.resize(nodes);
  grid.phase_index.resize(nodes);
  int phase = 0;
  for (int k = 0; k < nodes; ++k) {
    while (k > grid.phase_end[phase]) ++phase;
    grid.times[k] = k * schedule.dt;
    grid.phase_index[k] = phase;
    grid.contact[k] = contact_flags(schedule.phases[phase].config);
  }
  return grid;
}

/// Drops the completed stance and swing phases and appends the next two from the cycle.
inline GaitSchedule advance_horizon(const GaitSchedule& schedule) {
  if (schedule.cycle.empty()) throw Error(ErrorCode::kInvalidArgument, "cyclic pattern is empty");
  GaitSchedule next = schedule;
  const std::size_t drop = std::min<std::size_t>(2, next.phases.size());
  next.phases.erase(next.phases.begin(), next.phases.begin() + static_cast<std::ptrdiff_t>(drop));
  for (std::size_t i = 0; i < drop; ++i) {
    next.phases.push_back(next.cycle[next.cursor % next.cycle.size()]);
    next.cursor = (next.cursor + 1) % next.cycle.size();
  }
  return next;
}

}  // namespace quadplan
