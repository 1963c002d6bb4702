#pragma once

#include <cmath>
#include <cstdint>
#include <future>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "quadplan/config.hpp"
#include "quadplan/sim/planner_worker.hpp"
#include "quadplan/sim/sim_log.hpp"
#include "quadplan/sim/tracker.hpp"

namespace quadplan::sim {

struct Touchdown {
  double t = 0.0;
  Leg leg = Leg::LF;
  Vec3 position = Vec3::Zero();
  std::optional<std::string> surface;
  bool in_gap = false;
};

struct RunSummary {
  std::string reason;
  int touchdowns = 0;
  int plans_issued = 0;
  int replans = 0;
  int failures = 0;
  int late_plans = 0;
  double final_time = 0.0;
  RobotState final_state;
  std::vector<Touchdown> touchdown_log;
  std::vector<StateVector> base_trace;
};

/// Closed loop of plant, tracker and planner. Call tick() until it returns false. Plant time stands still while
/// the worker solves; the plan then takes effect after the modelled latency, during which the previous plan is
/// tracked.
class Simulation {
 public:
  Simulation(ScenarioConfig config, LogWriter* log)
      : cfg_(std::move(config)),
        log_(log),
        rng_(cfg_.seed),
        plant_(cfg_.initial_state()),
        terrain_(cfg_.terrain),
        goal_(cfg_.setup.goal),
        tpn_(cfg_.control_ticks_per_node()) {
    cfg_.validate();
    json source = cfg_.source.is_null() ? json::object() : cfg_.source;
    source["seed"] = cfg_.seed;
    emit({{"kind", "event"},
          {"t", 0.0},
          {"type", "run_start"},
          {"scenario", source},
          {"initial_state", to_json_array(plant_.vector())}});
    apply_due_events();
    PlanRequest request = make_request(cfg_.gait);
    request.x0 = plant_;
    ++replans_requested_;
    auto outcome = solve_plan(request);
    const int id = next_plan_id_++;
    log_replan(outcome, id, 0, 0.0, outcome.ok() ? "issued" : "failed");
    if (!outcome.ok()) {
      finish("planner_failure");
      return;
    }
    current_ = make_plan(id, 0, tpn_, cfg_.gait, *outcome.problem, outcome.solution->trajectory, cfg_.swing_apex);
    emit(plan_record(*current_, 0.0));
    ++summary_.plans_issued;
    log_state(ControlInput{}, current_->grid.contact[1], {});
  }

  bool finished() const { return finished_; }
  double time() const { return static_cast<double>(tick_) * cfg_.control_dt; }
  std::int64_t tick_count() const { return tick_; }
  const RobotState& plant() const { return plant_; }
  const Terrain& terrain() const { return terrain_; }
  const ScenarioConfig& config() const { return cfg_; }
  std::shared_ptr<const Plan> current_plan() const { return current_; }
  const RunSummary& summary() const { return summary_; }
  const TaskGoal& goal() const { return goal_; }

  /// Moves a declared obstacle; the change is seen by the next replan. Throws kUnknownObstacle.
  void relocate_obstacle(const std::string& id, const std::vector<double>& position, const std::string& source) {
    bool found = false;
    for (auto& box : terrain_.boxes) {
      if (box.id != id) continue;
      if (position.size() < 2) throw Error(ErrorCode::kInvalidArgument, "box position needs x and y");
      box.center = Vec2(position[0], position[1]);
      if (position.size() > 2) box.base_height = position[2];
      found = true;
    }
    for (auto& s : terrain_.spheres) {
      if (s.id != id) continue;
      if (position.size() != 3) throw Error(ErrorCode::kInvalidArgument, "sphere position needs x, y and z");
      s.center = Vec3(position[0], position[1], position[2]);
      found = true;
    }
    if (!found) throw Error(ErrorCode::kUnknownObstacle, "unknown obstacle '" + id + "'");
    emit({{"kind", "event"}, {"t", time()}, {"type", "relocate_obstacle"}, {"id", id}, {"position", position},
          {"source", source}});
  }

  void set_heading(double radians, const std::string& source) {
    goal_.heading = Vec2(std::cos(radians), std::sin(radians));
    emit({{"kind", "event"}, {"t", time()}, {"type", "set_heading"}, {"heading", radians}, {"source", source}});
  }

  void note(const std::string& type, const json& extra = json::object()) {
    json rec = {{"kind", "event"}, {"t", time()}, {"type", type}};
    rec.update(extra);
    emit(rec);
  }

  /// Advances the plant by one control tick.
  bool tick() {
    if (finished_) return false;
    apply_due_events();
    resolve_pending();
    if (finished_) return false;
    if (handle_touchdown()) return false;
    if (!pending_ && tick_ >= current_->end_tick()) {
      finish("plan_exhausted");
      return false;
    }
    const auto out = track_interval(*current_, plant_, cfg_.tracker, cfg_.robot, cfg_.control_dt, tick_);
    plant_ = out.next;
    ++tick_;
    if (tick_ % cfg_.state_log_every == 0) log_state(out.applied, out.stance, out.planned_fz);
    return true;
  }

  RunSummary run() {
    while (tick()) {
    }
    return summary_;
  }

 private:
  struct Pending {
    std::future<PlanOutcome> future;
    std::optional<PlanOutcome> outcome;
    int plan_id = 0;
    std::int64_t request_tick = 0;
    std::int64_t effect_tick = 0;
    GaitSchedule schedule;
  };

  void emit(const json& rec) {
    if (log_) log_->write(rec);
  }

  void finish(const std::string& reason) {
    if (finished_) return;
    finished_ = true;
    summary_.reason = reason;
    summary_.final_time = time();
    summary_.final_state = plant_;
    emit({{"kind", "event"},
          {"t", time()},
          {"type", "run_end"},
          {"reason", reason},
          {"touchdowns", summary_.touchdowns},
          {"final_state", to_json_array(plant_.vector())}});
  }

  PlanRequest make_request(const GaitSchedule& schedule) {
    PlanRequest r;
    r.schedule = schedule;
    r.terrain = terrain_;
    r.setup = cfg_.setup;
    r.setup.goal = goal_;
    r.solver = cfg_.solver;
    return r;
  }

  RobotState measure() {
    RobotState x = plant_;
    if (cfg_.noise.position_std > 0) {
      std::normal_distribution<double> d(0.0, cfg_.noise.position_std);
      for (int a = 0; a < 3; ++a) x.base_position()[a] += d(rng_);
    }
    if (cfg_.noise.orientation_std > 0) {
      std::normal_distribution<double> d(0.0, cfg_.noise.orientation_std);
      for (int a = 0; a < 3; ++a) x.base_orientation()[a] += d(rng_);
    }
    return x;
  }

  void apply_due_events() {
    while (next_event_ < cfg_.events.size() && cfg_.events[next_event_].time <= time() + 1e-12) {
      const auto& e = cfg_.events[next_event_++];
      relocate_obstacle(e.obstacle_id, e.position, "script");
    }
  }

  std::int64_t latency_ticks(const PlanOutcome& outcome) const {
    double seconds = cfg_.latency.seconds;
    if (cfg_.latency.model == LatencyModel::kPerIteration)
      seconds *= outcome.solution ? outcome.solution->iterations : 1;
    else if (cfg_.latency.model == LatencyModel::kMeasured)
      seconds = outcome.wall_ms * 1e-3;
    return static_cast<std::int64_t>(std::ceil(seconds / cfg_.control_dt - 1e-9));
  }

  bool handle_touchdown() {
    const auto phase = current_->touchdown_at(tick_);
    if (!phase) return false;
    const Leg leg = *swing_leg(current_->schedule.phases[*phase].config);
    Touchdown td;
    td.t = time();
    td.leg = leg;
    td.position = plant_.foot_position(leg);
    td.in_gap = terrain_.gap_at(td.position.head<2>()) != nullptr;
    if (auto s = terrain_.surface_under(td.position.head<2>())) td.surface = s->id;
    summary_.touchdown_log.push_back(td);
    ++summary_.touchdowns;
    emit({{"kind", "event"},
          {"t", td.t},
          {"type", "touchdown"},
          {"leg", std::string(leg_name(leg))},
          {"position", to_json_array(td.position)},
          {"surface", td.surface ? json(*td.surface) : json(nullptr)},
          {"in_gap", td.in_gap},
          {"plan_id", current_->id}});
    if (summary_.touchdowns >= cfg_.duration_steps) {
      finish("completed");
      return true;
    }
    if (pending_) {
      // A solve is still outstanding from the previous touchdown; it is superseded.
      pending_.reset();
      ++summary_.late_plans;
    }
    GaitSchedule schedule = current_->schedule;
    for (int m = 0; m < current_->swing_ordinal(*phase); ++m) schedule = advance_horizon(schedule);
    PlanRequest request = make_request(schedule);
    request.x0 = measure();
    Pending p;
    p.plan_id = next_plan_id_++;
    p.request_tick = tick_;
    p.schedule = schedule;
    p.future = worker_.submit(std::move(request));
    ++replans_requested_;
    pending_ = std::move(p);
    resolve_pending();
    return false;
  }

  void log_replan(const PlanOutcome& outcome, int plan_id, std::int64_t request_tick, double latency,
                  const std::string& result) {
    ++summary_.replans;
    json rec = {{"kind", "replan"},
                {"t", time()},
                {"t_request", static_cast<double>(request_tick) * cfg_.control_dt},
                {"plan_id", plan_id},
                {"outcome", result},
                {"latency", latency}};
    if (outcome.solution) {
      const auto& s = *outcome.solution;
      rec["status"] = status_name(s.status);
      rec["iterations"] = s.iterations;
      rec["cost"] = s.cost;
      rec["max_equality"] = s.max_equality_residual();
      rec["max_inequality"] = s.max_inequality_violation();
      rec["max_defect"] = s.max_defect();
    }
    if (outcome.error) rec["error"] = outcome.message;
    else if (!outcome.message.empty()) rec["message"] = outcome.message;
    if (cfg_.log_timing) rec["solve_ms"] = outcome.wall_ms;
    emit(rec);
    if (outcome.solution) emit(diagnostics_record(*outcome.solution, plan_id, time(), cfg_.log_timing, outcome.wall_ms));
  }

  /// Collects a finished solve and, once its latency has elapsed, hands the plan to the tracker.
  void resolve_pending() {
    if (!pending_) return;
    auto& p = *pending_;
    if (!p.outcome) {
      p.outcome = p.future.get();
      p.effect_tick = p.request_tick + latency_ticks(*p.outcome);
      if (!p.outcome->ok()) {
        ++summary_.failures;
        log_replan(*p.outcome, p.plan_id, p.request_tick, 0.0, "failed");
        pending_.reset();
        if (cfg_.failure_policy == FailurePolicy::kHalt) finish("planner_failure");
        return;
      }
    }
    if (tick_ < p.effect_tick) return;
    auto plan = make_plan(p.plan_id, p.request_tick, tpn_, p.schedule, *p.outcome->problem,
                          p.outcome->solution->trajectory, cfg_.swing_apex);
    const double latency = static_cast<double>(p.effect_tick - p.request_tick) * cfg_.control_dt;
    if (p.effect_tick > plan->first_liftoff_tick()) {
      ++summary_.late_plans;
      log_replan(*p.outcome, p.plan_id, p.request_tick, latency, "late");
      pending_.reset();
      return;
    }
    log_replan(*p.outcome, p.plan_id, p.request_tick, latency, "issued");
    current_ = plan;
    emit(plan_record(*current_, time()));
    ++summary_.plans_issued;
    pending_.reset();
  }

  void log_state(const ControlInput& applied, const ContactFlags& stance, const std::array<double, kLegCount>& planned_fz) {
    json forces = json::array();
    for (int i = 0; i < kLegCount; ++i) forces.push_back(to_json_array(applied.contact_force(i)));
    emit({{"kind", "state"},
          {"t", time()},
          {"x", to_json_array(plant_.vector())},
          {"forces", forces},
          {"planned_fz", planned_fz},
          {"stance", stance},
          {"plan_id", current_ ? current_->id : -1}});
    summary_.base_trace.push_back(plant_.vector());
  }

  ScenarioConfig cfg_;
  LogWriter* log_;
  std::mt19937_64 rng_;
  RobotState plant_;
  Terrain terrain_;
  TaskGoal goal_;
  int tpn_;
  std::int64_t tick_ = 0;
  std::size_t next_event_ = 0;
  int next_plan_id_ = 0;
  int replans_requested_ = 0;
  bool finished_ = false;
  std::shared_ptr<const Plan> current_;
  std::optional<Pending> pending_;
  RunSummary summary_;
  PlannerWorker worker_;
};

inline RunSummary run_scenario(const ScenarioConfig& config, LogWriter* log) {
  Simulation sim(config, log);
  return sim.run();
}

}  // namespace quadplan::sim
