#pragma once

#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "quadplan/config.hpp"
#include "quadplan/sim/tracker.hpp"

namespace quadplan::sim {

template <class Derived>
json to_json_array(const Eigen::MatrixBase<Derived>& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

template <int N>
Eigen::Matrix<double, N, 1> from_json_array(const json& j) {
  if (!j.is_array() || static_cast<int>(j.size()) != N)
    throw Error(ErrorCode::kConfig, "expected an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[i].get<double>();
  return v;
}

inline json plane_json(const ContactPlane& p) {
  return {{"id", p.id}, {"normal", to_json_array(p.normal)}, {"offset", p.offset}};
}

inline ContactPlane plane_from_json(const json& j) {
  ContactPlane p;
  p.id = j.at("id").get<std::string>();
  p.normal = from_json_array<3>(j.at("normal"));
  p.offset = j.at("offset").get<double>();
  return p;
}

inline json plan_record(const Plan& plan, double t) {
  json x = json::array(), u = json::array(), planes = json::array(), spheres = json::array(), steps = json::array();
  for (const auto& v : plan.x) x.push_back(to_json_array(v));
  for (const auto& v : plan.u) u.push_back(to_json_array(v));
  for (const auto& legs : plan.phase_planes) {
    json row = json::array();
    for (const auto& p : legs) row.push_back(plane_json(p));
    planes.push_back(row);
  }
  for (const auto& s : plan.spheres)
    spheres.push_back({{"id", s.id}, {"center", to_json_array(s.center)}, {"radius", s.radius}});
  for (const auto& [a, b] : plan.step_ranges()) steps.push_back({a, b});
  return {{"kind", "plan"},
          {"t", t},
          {"plan_id", plan.id},
          {"t_origin", static_cast<double>(plan.origin_tick) * plan.schedule.dt / plan.ticks_per_node},
          {"dt", plan.schedule.dt},
          {"phases", config_detail::phases_json(plan.schedule.phases)},
          {"steps", steps},
          {"friction", {{"mu", plan.friction.mu}, {"faces", plan.friction.face_count}, {"force_max", plan.friction.force_max}}},
          {"planes", planes},
          {"spheres", spheres},
          {"x", x},
          {"u", u}};
}

inline json diagnostics_record(const TrajectorySolution& sol, int plan_id, double t, bool timing, double wall_ms) {
  json history = json::array();
  for (std::size_t i = 0; i < sol.history.size(); ++i) {
    const auto& h = sol.history[i];
    json item = {{"iteration", i + 1},
                 {"cost", h.cost},
                 {"merit", h.merit},
                 {"step", h.step},
                 {"penalty", h.penalty},
                 {"max_equality", h.max_equality},
                 {"max_inequality", h.max_inequality},
                 {"max_defect", h.max_defect},
                 {"ipm_iterations", h.ipm_iterations}};
    if (timing) item["wall_ms"] = h.wall_ms;
    history.push_back(item);
  }
  json out = {{"kind", "diagnostics"}, {"t", t}, {"plan_id", plan_id}, {"history", history}};
  if (timing) out["solve_ms"] = wall_ms;
  return out;
}

/// JSON-lines sink; every record is also handed to the listeners.
class LogWriter {
 public:
  LogWriter() = default;
  explicit LogWriter(std::ostream* out) : out_(out) {}

  void add_listener(std::function<void(const json&)> f) { listeners_.push_back(std::move(f)); }

  void write(const json& record) {
    if (out_) *out_ << record.dump() << '\n';
    for (const auto& f : listeners_) f(record);
    ++count_;
  }

  std::size_t count() const { return count_; }

 private:
  std::ostream* out_ = nullptr;
  std::vector<std::function<void(const json&)>> listeners_;
  std::size_t count_ = 0;
};

inline std::vector<json> read_log(std::istream& in) {
  std::vector<json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, "log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<json> read_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfig, "cannot open log '" + path + "'");
  return read_log(in);
}

struct PlanAudit {
  int plan_id = 0;
  double max_equality = 0.0;
  double max_inequality = 0.0;
  double max_defect = 0.0;
  bool feasible = false;
};

struct AuditReport {
  int plans = 0;
  int feasible_plans = 0;
  int replans = 0;
  int touchdowns = 0;
  bool monotone_time = true;
  bool replans_reference_plans = true;
  double max_equality = 0.0;
  double max_inequality = 0.0;
  double max_defect = 0.0;
  std::vector<PlanAudit> details;
  std::vector<std::string> problems;

  bool ok() const { return plans > 0 && plans == feasible_plans && monotone_time && replans_reference_plans && problems.empty(); }
};

/// Re-checks every plan record against the dynamics and the per-node constraints it was solved with.
inline PlanAudit audit_plan(const json& rec, const RobotParams& robot, const SolverSettings& tol) {
  PlanAudit a;
  a.plan_id = rec.at("plan_id").get<int>();
  GaitSchedule schedule;
  schedule.dt = rec.at("dt").get<double>();
  schedule.phases = config_detail::parse_phases(rec.at("phases"));
  const NodeGrid grid = build_node_grid(schedule);
  FrictionModel friction;
  friction.mu = rec.at("friction").at("mu").get<double>();
  friction.face_count = rec.at("friction").at("faces").get<int>();
  friction.force_max = rec.at("friction").at("force_max").get<double>();
  std::vector<LegPlanes> planes;
  for (const auto& row : rec.at("planes")) {
    LegPlanes legs;
    for (int i = 0; i < kLegCount; ++i) legs[i] = plane_from_json(row.at(i));
    planes.push_back(legs);
  }
  std::vector<SphereObstacle> spheres;
  for (const auto& s : rec.at("spheres"))
    spheres.push_back({s.at("id").get<std::string>(), from_json_array<3>(s.at("center")), s.at("radius").get<double>()});
  const auto sets = build_constraint_sets(grid, planes, friction, spheres);
  const auto& xs = rec.at("x");
  const auto& us = rec.at("u");
  const int N = grid.node_count() - 1;
  if (static_cast<int>(xs.size()) != N + 1 || static_cast<int>(us.size()) != N)
    throw Error(ErrorCode::kDimensionMismatch, "plan trajectory does not match its node grid");
  for (int k = 0; k <= N; ++k) {
    const RobotState x(from_json_array<kStateDim>(xs[k]));
    NodeConstraints c;
    if (k < N) {
      const ControlInput u(from_json_array<kInputDim>(us[k]));
      c = evaluate_node_constraints(x, u, sets[k]);
      const StateVector next = integrate_step(x, u, schedule.dt, robot).vector();
      a.max_defect = std::max(a.max_defect, (next - from_json_array<kStateDim>(xs[k + 1])).cwiseAbs().maxCoeff());
    } else {
      c = evaluate_node_constraints(x, sets[k]);
    }
    a.max_equality = std::max(a.max_equality, c.max_equality_residual());
    a.max_inequality = std::max(a.max_inequality, c.max_inequality_violation());
  }
  a.feasible = a.max_equality <= tol.constraint_tolerance && a.max_inequality <= tol.constraint_tolerance &&
               a.max_defect <= tol.defect_tolerance;
  return a;
}

/// Feasibility sweep over a run log; robot and tolerances come from the scenario echoed at the start of the run.
inline AuditReport audit_log(const std::vector<json>& records) {
  AuditReport report;
  std::optional<ScenarioConfig> scenario;
  double last_t = -1.0;
  std::map<int, bool> plan_ids;
  std::vector<int> referenced;
  for (const auto& rec : records) {
    const double t = rec.at("t").get<double>();
    if (t < last_t) report.monotone_time = false;
    last_t = t;
    const auto kind = rec.at("kind").get<std::string>();
    if (kind == "event" && rec.value("type", "") == "run_start") {
      scenario = parse_scenario(rec.at("scenario"));
    } else if (kind == "plan") {
      if (!scenario) {
        report.problems.push_back("plan record before run_start");
        continue;
      }
      ++report.plans;
      const auto a = audit_plan(rec, scenario->robot, scenario->solver);
      plan_ids[a.plan_id] = true;
      report.feasible_plans += a.feasible ? 1 : 0;
      report.max_equality = std::max(report.max_equality, a.max_equality);
      report.max_inequality = std::max(report.max_inequality, a.max_inequality);
      report.max_defect = std::max(report.max_defect, a.max_defect);
      report.details.push_back(a);
    } else if (kind == "replan") {
      ++report.replans;
      if (rec.value("outcome", "") == "issued") referenced.push_back(rec.at("plan_id").get<int>());
    } else if (kind == "event" && rec.value("type", "") == "touchdown") {
      ++report.touchdowns;
    }
  }
  for (int id : referenced)
    if (!plan_ids.count(id)) report.replans_reference_plans = false;
  if (!scenario) report.problems.push_back("log has no run_start record");
  return report;
}

}  // namespace quadplan::sim
