#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "quadplan/contact_constraints.hpp"
#include "quadplan/cost_model.hpp"
#include "quadplan/gait_schedule.hpp"
#include "quadplan/locomotion_problem.hpp"
#include "quadplan/nominal_planner.hpp"
#include "quadplan/rigid_body_model.hpp"
#include "quadplan/slq_solver.hpp"

namespace quadplan {

using nlohmann::json;

inline constexpr int kScenarioVersion = 1;

/// Task-space PD gains of the tracker; swing feet are velocity-commanded, so they only take a stiffness.
struct TrackerGains {
  Vec3 position_stiffness{400.0, 400.0, 400.0};
  Vec3 position_damping{40.0, 40.0, 40.0};
  Vec3 orientation_stiffness{300.0, 300.0, 300.0};
  Vec3 orientation_damping{30.0, 30.0, 30.0};
  Vec3 swing_stiffness{50.0, 50.0, 50.0};
  /// Tikhonov weight of the wrench distribution.
  double regularization = 1e-4;

  static TrackerGains zero() {
    TrackerGains g;
    g.position_stiffness.setZero();
    g.position_damping.setZero();
    g.orientation_stiffness.setZero();
    g.orientation_damping.setZero();
    g.swing_stiffness.setZero();
    return g;
  }

  void validate() const {
    for (const Vec3* v : {&position_stiffness, &position_damping, &orientation_stiffness, &orientation_damping,
                          &swing_stiffness})
      if (v->minCoeff() < 0.0) throw Error(ErrorCode::kConfig, "tracker gains must be non-negative");
    if (!(regularization > 0.0)) throw Error(ErrorCode::kConfig, "tracker regularization must be positive");
  }
};

struct NoiseSettings {
  double position_std = 0.0;
  double orientation_std = 0.0;
};

enum class LatencyModel { kFixed, kPerIteration, kMeasured };

struct LatencySettings {
  LatencyModel model = LatencyModel::kPerIteration;
  /// Fixed delay, or delay per SLQ iteration.
  double seconds = 0.02;
};

enum class FailurePolicy { kHalt, kContinue };

struct ScenarioEvent {
  double time = 0.0;
  std::string type = "relocate_obstacle";
  std::string obstacle_id;
  /// Box centre (x, y) or sphere centre (x, y, z).
  std::vector<double> position;
};

struct ScenarioConfig {
  int version = kScenarioVersion;
  std::string name;
  std::string description;
  RobotParams robot = RobotParams::defaults();
  Vec3 start_position{0.0, 0.0, 0.45};
  double start_yaw = 0.0;
  Terrain terrain = Terrain::flat();
  GaitSchedule gait = GaitSchedule::walking();
  LocomotionSetup setup;
  SolverSettings solver;
  double swing_apex = 0.08;
  double control_dt = 0.0025;
  TrackerGains tracker;
  NoiseSettings noise;
  std::uint64_t seed = 1;
  LatencySettings latency;
  std::vector<ScenarioEvent> events;
  int duration_steps = 8;
  FailurePolicy failure_policy = FailurePolicy::kContinue;
  int state_log_every = 8;
  bool log_timing = false;
  /// The scenario as loaded, echoed into logs.
  json source;

  RobotState initial_state() const {
    RobotState x = RobotState::standing(robot, start_position);
    if (start_yaw != 0.0) {
      const Mat3 r = euler_xyz_rotation(Vec3(0, 0, start_yaw));
      x.base_orientation() = Vec3(0, 0, start_yaw);
      for (int i = 0; i < kLegCount; ++i) x.foot_position(i) = start_position + r * robot.nominal_stance[i];
    }
    const auto& feet_terrain = terrain;
    for (int i = 0; i < kLegCount; ++i) {
      auto plane = feet_terrain.surface_under(x.foot_position(i).head<2>());
      if (!plane) throw Error(ErrorCode::kConfig, "initial foot " + std::string(leg_name(kAllLegs[i])) + " has no surface");
      x.foot_position(i) = plane->project_vertically(x.foot_position(i));
    }
    return x;
  }

  int control_ticks_per_node() const { return static_cast<int>(std::lround(gait.dt / control_dt)); }

  void validate() const {
    if (version != kScenarioVersion)
      throw Error(ErrorCode::kConfig, "unsupported scenario version " + std::to_string(version));
    robot.validate();
    terrain.validate();
    gait.validate();
    if (gait.cycle.empty()) throw Error(ErrorCode::kConfig, "gait cycle is empty");
    setup.friction.validate();
    setup.weights.validate();
    setup.goal.validate();
    solver.validate();
    tracker.validate();
    if (!(control_dt > 0.0)) throw Error(ErrorCode::kConfig, "control_dt must be positive");
    const double ratio = gait.dt / control_dt;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1)
      throw Error(ErrorCode::kConfig, "gait dt must be an integer multiple of control_dt");
    if (!(swing_apex >= 0.0)) throw Error(ErrorCode::kConfig, "swing apex must be non-negative");
    if (noise.position_std < 0 || noise.orientation_std < 0)
      throw Error(ErrorCode::kConfig, "noise standard deviations must be non-negative");
    if (latency.seconds < 0) throw Error(ErrorCode::kConfig, "latency must be non-negative");
    if (duration_steps < 1) throw Error(ErrorCode::kConfig, "duration must cover at least one step");
    if (state_log_every < 1) throw Error(ErrorCode::kConfig, "state_log_every must be positive");
    build_node_grid(gait);
    int swings = 0;
    for (const auto& p : gait.phases) swings += swing_leg(p.config) ? 1 : 0;
    if (swings < 1 || gait.phases.front().config != PhaseConfig::F)
      throw Error(ErrorCode::kConfig, "gait window must start with a four-feet phase and contain a swing");
    for (const auto& e : events) {
      if (e.type != "relocate_obstacle") throw Error(ErrorCode::kConfig, "unknown event type '" + e.type + "'");
      if (!(e.time >= 0.0)) throw Error(ErrorCode::kConfig, "event times must be non-negative");
      if (!terrain.has_obstacle(e.obstacle_id))
        throw Error(ErrorCode::kUnknownObstacle, "event references unknown obstacle '" + e.obstacle_id + "'");
      if (e.position.size() != 2 && e.position.size() != 3)
        throw Error(ErrorCode::kConfig, "relocation position needs 2 or 3 coordinates");
    }
    initial_state();
  }
};

namespace config_detail {

template <class T>
T get_or(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("field '") + key + "': " + e.what());
  }
}

template <int N>
Eigen::Matrix<double, N, 1> vec(const json& j, const char* what) {
  Eigen::Matrix<double, N, 1> out;
  if (j.is_number()) {
    out.setConstant(j.get<double>());
    return out;
  }
  if (!j.is_array() || static_cast<int>(j.size()) != N)
    throw Error(ErrorCode::kConfig, std::string(what) + " needs " + std::to_string(N) + " numbers");
  for (int i = 0; i < N; ++i) out[i] = j[i].get<double>();
  return out;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_or(const json& j, const char* key, const Eigen::Matrix<double, N, 1>& fallback) {
  return j.contains(key) ? vec<N>(j.at(key), key) : fallback;
}

inline std::optional<Rect> parse_bounds(const json& j) {
  if (!j.contains("bounds") || j.at("bounds").is_null()) return std::nullopt;
  const auto& b = j.at("bounds");
  if (!b.is_array() || b.size() != 2) throw Error(ErrorCode::kConfig, "bounds must be [[xmin, ymin], [xmax, ymax]]");
  Rect r{vec<2>(b[0], "bounds"), vec<2>(b[1], "bounds")};
  if ((r.max - r.min).minCoeff() <= 0.0) throw Error(ErrorCode::kConfig, "bounds must have positive extent");
  return r;
}

inline ContactPlane parse_plane(const json& j) {
  ContactPlane p;
  p.id = j.at("id").get<std::string>();
  p.normal = vec_or<3>(j, "normal", Vec3::UnitZ());
  if (!(p.normal.norm() > 0)) throw Error(ErrorCode::kConfig, "plane normal must be non-zero");
  p.normal.normalize();
  if (j.contains("height")) {
    p.offset = -p.normal.z() * j.at("height").get<double>();
  } else {
    p.offset = get_or(j, "offset", 0.0);
  }
  p.bounds = parse_bounds(j);
  return p;
}

inline std::vector<GaitPhase> parse_phases(const json& j) {
  std::vector<GaitPhase> out;
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2) throw Error(ErrorCode::kConfig, "phases are [config, duration] pairs");
    out.push_back({parse_config(item[0].get<std::string>()), item[1].get<double>()});
  }
  return out;
}

inline json phases_json(const std::vector<GaitPhase>& phases) {
  json out = json::array();
  for (const auto& p : phases) out.push_back({std::string(config_name(p.config)), p.duration});
  return out;
}

}  // namespace config_detail

inline Terrain parse_terrain(const json& j) {
  using namespace config_detail;
  Terrain t;
  for (const auto& p : j.value("planes", json::array())) t.planes.push_back(parse_plane(p));
  for (const auto& b : j.value("boxes", json::array())) {
    BoxObstacle box;
    box.id = b.at("id").get<std::string>();
    box.center = vec<2>(b.at("center"), "box center");
    box.size = vec_or<2>(b, "size", box.size);
    box.height = get_or(b, "height", box.height);
    box.base_height = get_or(b, "base_height", box.base_height);
    if (box.size.minCoeff() <= 0 || !(box.height > 0)) throw Error(ErrorCode::kConfig, "box dimensions must be positive");
    t.boxes.push_back(box);
  }
  for (const auto& g : j.value("gaps", json::array())) {
    GapVolume gap;
    gap.id = g.at("id").get<std::string>();
    gap.min = vec<3>(g.at("min"), "gap min");
    gap.max = vec<3>(g.at("max"), "gap max");
    if ((gap.max - gap.min).minCoeff() <= 0) throw Error(ErrorCode::kConfig, "gap volume must have positive extent");
    t.gaps.push_back(gap);
  }
  for (const auto& s : j.value("spheres", json::array())) {
    SphereObstacle sphere;
    sphere.id = s.at("id").get<std::string>();
    sphere.center = vec<3>(s.at("center"), "sphere center");
    sphere.radius = get_or(s, "radius", sphere.radius);
    t.spheres.push_back(sphere);
  }
  std::vector<std::string> ids;
  for (const auto& p : t.planes) ids.push_back(p.id);
  for (const auto& b : t.boxes) ids.push_back(b.id);
  for (const auto& g : t.gaps) ids.push_back(g.id);
  for (const auto& s : t.spheres) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw Error(ErrorCode::kConfig, "terrain ids must be unique");
  return t;
}

inline json terrain_json(const Terrain& t) {
  json out = {{"planes", json::array()}, {"boxes", json::array()}, {"gaps", json::array()}, {"spheres", json::array()}};
  for (const auto& p : t.planes) {
    json j = {{"id", p.id}, {"normal", {p.normal.x(), p.normal.y(), p.normal.z()}}, {"offset", p.offset}};
    if (p.bounds) j["bounds"] = {{p.bounds->min.x(), p.bounds->min.y()}, {p.bounds->max.x(), p.bounds->max.y()}};
    out["planes"].push_back(j);
  }
  for (const auto& b : t.boxes)
    out["boxes"].push_back({{"id", b.id},
                            {"center", {b.center.x(), b.center.y()}},
                            {"size", {b.size.x(), b.size.y()}},
                            {"height", b.height},
                            {"base_height", b.base_height}});
  for (const auto& g : t.gaps)
    out["gaps"].push_back(
        {{"id", g.id}, {"min", {g.min.x(), g.min.y(), g.min.z()}}, {"max", {g.max.x(), g.max.y(), g.max.z()}}});
  for (const auto& s : t.spheres)
    out["spheres"].push_back(
        {{"id", s.id}, {"center", {s.center.x(), s.center.y(), s.center.z()}}, {"radius", s.radius}});
  return out;
}

inline GaitSchedule parse_gait(const json& j) {
  using namespace config_detail;
  const double dt = get_or(j, "dt", 0.02);
  if (j.contains("initial")) {
    GaitSchedule s;
    s.dt = dt;
    s.phases = parse_phases(j.at("initial"));
    s.cycle = parse_phases(j.at("cycle"));
    s.cursor = get_or<std::size_t>(j, "cursor", 0);
    if (!s.cycle.empty() && s.cursor >= s.cycle.size()) throw Error(ErrorCode::kConfig, "gait cursor out of range");
    return s;
  }
  const auto preset = get_or<std::string>(j, "preset", "walk");
  if (preset != "walk") throw Error(ErrorCode::kConfig, "unknown gait preset '" + preset + "'");
  return GaitSchedule::walking(dt, get_or(j, "horizon_steps", 2));
}

inline CostWeights parse_weights(const json& j) {
  using namespace config_detail;
  CostWeights w = CostWeights::flat_walk_defaults();
  w.q_base = vec_or<kBaseDim>(j, "q_base", w.q_base);
  w.q_footstep = vec_or<3 * kLegCount>(j, "q_footstep", w.q_footstep);
  if (j.contains("q_final")) {
    w.q_final = vec<kStateDim>(j.at("q_final"), "q_final");
  } else {
    w.q_final = get_or(j, "final_scale", 10.0) * w.q_running();
  }
  w.r_contact = vec_or<3 * kLegCount>(j, "r_contact", w.r_contact);
  w.r_velocity = vec_or<3 * kLegCount>(j, "r_velocity", w.r_velocity);
  w.w_reach = get_or(j, "w_reach", w.w_reach);
  return w;
}

inline SolverSettings parse_solver(const json& j) {
  using namespace config_detail;
  SolverSettings s;
  s.max_iterations = get_or(j, "max_iterations", s.max_iterations);
  s.cost_tolerance = get_or(j, "cost_tolerance", s.cost_tolerance);
  s.constraint_tolerance = get_or(j, "constraint_tolerance", s.constraint_tolerance);
  s.defect_tolerance = get_or(j, "defect_tolerance", s.defect_tolerance);
  s.backtracking = get_or(j, "backtracking", s.backtracking);
  s.min_step = get_or(j, "min_step", s.min_step);
  s.armijo = get_or(j, "armijo", s.armijo);
  if (j.contains("ipm")) {
    const auto& q = j.at("ipm");
    s.ipm.tolerance = get_or(q, "tolerance", s.ipm.tolerance);
    s.ipm.max_iterations = get_or(q, "max_iterations", s.ipm.max_iterations);
    s.ipm.fraction_to_boundary = get_or(q, "fraction_to_boundary", s.ipm.fraction_to_boundary);
    s.ipm.regularization = get_or(q, "regularization", s.ipm.regularization);
  }
  return s;
}

inline TrackerGains parse_tracker(const json& j) {
  using namespace config_detail;
  TrackerGains g;
  g.position_stiffness = vec_or<3>(j, "position_stiffness", g.position_stiffness);
  g.position_damping = vec_or<3>(j, "position_damping", g.position_damping);
  g.orientation_stiffness = vec_or<3>(j, "orientation_stiffness", g.orientation_stiffness);
  g.orientation_damping = vec_or<3>(j, "orientation_damping", g.orientation_damping);
  g.swing_stiffness = vec_or<3>(j, "swing_stiffness", g.swing_stiffness);
  g.regularization = get_or(j, "regularization", g.regularization);
  return g;
}

inline ScenarioConfig parse_scenario(const json& j) {
  using namespace config_detail;
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "scenario must be a JSON object");
  if (!j.contains("version")) throw Error(ErrorCode::kConfig, "scenario is missing its version field");
  ScenarioConfig c;
  try {
    c.version = j.at("version").get<int>();
    if (c.version != kScenarioVersion)
      throw Error(ErrorCode::kConfig, "unsupported scenario version " + std::to_string(c.version));
    c.name = get_or<std::string>(j, "name", "");
    c.description = get_or<std::string>(j, "description", "");
    if (j.contains("robot")) {
      const auto& r = j.at("robot");
      c.robot = RobotParams::with_stance(get_or(r, "mass", 30.0), vec_or<3>(r, "inertia", Vec3(0.88, 1.42, 1.57)),
                                         get_or(r, "nominal_height", 0.45), get_or(r, "half_length", 0.3),
                                         get_or(r, "half_width", 0.2));
    }
    if (j.contains("start")) {
      const auto& s = j.at("start");
      c.start_position = vec_or<3>(s, "base_position", c.start_position);
      c.start_yaw = get_or(s, "yaw", 0.0);
    }
    if (j.contains("terrain")) c.terrain = parse_terrain(j.at("terrain"));
    if (j.contains("gait")) c.gait = parse_gait(j.at("gait"));
    c.setup.robot = c.robot;
    c.setup.friction = FrictionModel::for_robot(c.robot);
    if (j.contains("friction")) {
      const auto& f = j.at("friction");
      c.setup.friction.mu = get_or(f, "mu", c.setup.friction.mu);
      c.setup.friction.face_count = get_or(f, "faces", c.setup.friction.face_count);
      c.setup.friction.force_max = get_or(f, "force_max", c.setup.friction.force_max);
    }
    if (j.contains("weights")) c.setup.weights = parse_weights(j.at("weights"));
    if (j.contains("goal")) {
      const auto& g = j.at("goal");
      if (g.contains("heading_deg")) {
        const double a = g.at("heading_deg").get<double>() * std::numbers::pi / 180.0;
        c.setup.goal.heading = Vec2(std::cos(a), std::sin(a));
      } else if (g.contains("heading")) {
        c.setup.goal.heading = vec<2>(g.at("heading"), "heading").normalized();
      }
      c.setup.goal.step_length = get_or(g, "step_length", c.setup.goal.step_length);
      c.setup.goal.base_height = get_or(g, "base_height", c.setup.goal.base_height);
    }
    if (j.contains("footholds")) c.setup.footholds.edge_margin = get_or(j.at("footholds"), "edge_margin", 0.03);
    c.setup.reach_height = get_or(j, "reach_height", c.setup.reach_height);
    if (j.contains("solver")) c.solver = parse_solver(j.at("solver"));
    if (j.contains("swing")) c.swing_apex = get_or(j.at("swing"), "apex_height", c.swing_apex);
    c.control_dt = get_or(j, "control_dt", c.control_dt);
    if (j.contains("tracker")) c.tracker = parse_tracker(j.at("tracker"));
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      c.noise.position_std = get_or(n, "position_std", 0.005);
      c.noise.orientation_std = get_or(n, "orientation_std", 0.01);
    }
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    if (j.contains("latency")) {
      const auto& l = j.at("latency");
      const auto model = get_or<std::string>(l, "model", "per_iteration");
      if (model == "fixed") c.latency.model = LatencyModel::kFixed;
      else if (model == "per_iteration") c.latency.model = LatencyModel::kPerIteration;
      else if (model == "measured") c.latency.model = LatencyModel::kMeasured;
      else throw Error(ErrorCode::kConfig, "unknown latency model '" + model + "'");
      c.latency.seconds = get_or(l, "seconds", c.latency.seconds);
    }
    for (const auto& e : j.value("events", json::array())) {
      ScenarioEvent ev;
      ev.time = e.at("time").get<double>();
      ev.type = get_or<std::string>(e, "type", ev.type);
      ev.obstacle_id = e.at("id").get<std::string>();
      ev.position = e.at("position").get<std::vector<double>>();
      c.events.push_back(ev);
    }
    std::stable_sort(c.events.begin(), c.events.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
    if (j.contains("duration")) c.duration_steps = get_or(j.at("duration"), "steps", c.duration_steps);
    const auto policy = get_or<std::string>(j, "failure_policy", "continue");
    if (policy == "halt") c.failure_policy = FailurePolicy::kHalt;
    else if (policy == "continue") c.failure_policy = FailurePolicy::kContinue;
    else throw Error(ErrorCode::kConfig, "failure_policy must be 'halt' or 'continue'");
    if (j.contains("log")) {
      c.state_log_every = get_or(j.at("log"), "state_every", c.state_log_every);
      c.log_timing = get_or(j.at("log"), "timing", c.log_timing);
    }
    c.source = j;
    c.validate();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kUnknownObstacle || e.code() == ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, e.what());
  }
  return c;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path + ": " + e.what());
  }
}

inline ScenarioConfig load_scenario(const std::string& path) { return parse_scenario(read_json_file(path)); }

}  // namespace quadplan
