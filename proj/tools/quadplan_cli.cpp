#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "quadplan/config.hpp"
#include "quadplan/server/websocket.hpp"
#include "quadplan/sim/simulation.hpp"

using namespace quadplan;

namespace {

void print_summary(const sim::RunSummary& s) {
  std::printf("end: %s at t=%.3f s\n", s.reason.c_str(), s.final_time);
  std::printf("touchdowns %d, plans issued %d, replans %d, failures %d, late %d\n", s.touchdowns, s.plans_issued,
              s.replans, s.failures, s.late_plans);
  const RobotState& x = s.final_state;
  std::printf("final base position [%.4f %.4f %.4f]\n", x.base_position().x(), x.base_position().y(),
              x.base_position().z());
}

void print_audit(const sim::AuditReport& a) {
  std::printf("audit: %d/%d plans feasible, max eq %.2e, max ineq %.2e, max defect %.2e, %s timestamps\n",
              a.feasible_plans, a.plans, a.max_equality, a.max_inequality, a.max_defect,
              a.monotone_time ? "monotone" : "NON-monotone");
  for (const auto& p : a.problems) std::printf("audit problem: %s\n", p.c_str());
}

int run(const std::string& path, bool headless, std::optional<std::uint64_t> seed, const std::string& log_path,
        std::optional<int> port, bool paused) {
  auto config = load_scenario(path);
  if (seed) config.seed = *seed;
  if (port) {
    server::ServerOptions options;
    options.port = static_cast<unsigned short>(*port);
    options.scenario_dir = std::filesystem::path(path).parent_path().string();
    options.log_path = log_path;
    server::Server srv(options);
    srv.controller().load(config);
    if (!paused) srv.controller().start();
    if (!headless) {
      std::printf("serving on port %u\n", static_cast<unsigned>(srv.port()));
      std::fflush(stdout);
    }
    srv.run();
    return 0;
  }
  std::ofstream file;
  sim::LogWriter log;
  if (!log_path.empty()) {
    file.open(log_path);
    if (!file) throw Error(ErrorCode::kConfig, "cannot write '" + log_path + "'");
    log = sim::LogWriter(&file);
  }
  if (!headless) {
    log.add_listener([](const json& rec) {
      const auto kind = rec.at("kind").get<std::string>();
      if (kind == "replan")
        std::printf("t=%6.3f replan plan %d: %s, %d iterations\n", rec.at("t").get<double>(),
                    rec.at("plan_id").get<int>(), rec.at("outcome").get<std::string>().c_str(),
                    rec.value("iterations", 0));
      else if (kind == "event" && rec.at("type") == "touchdown")
        std::printf("t=%6.3f touchdown %s on %s\n", rec.at("t").get<double>(),
                    rec.at("leg").get<std::string>().c_str(),
                    rec.at("surface").is_null() ? "nothing" : rec.at("surface").get<std::string>().c_str());
    });
  }
  const auto summary = sim::run_scenario(config, &log);
  print_summary(summary);
  return summary.reason == "completed" ? 0 : 2;
}

int replay(const std::string& path, bool verify) {
  const auto records = sim::read_log_file(path);
  const auto report = sim::audit_log(records);
  std::printf("%zu records, %d touchdowns, %d replans\n", records.size(), report.touchdowns, report.replans);
  for (const auto& rec : records)
    if (rec.at("kind") == "event" && rec.at("type") == "run_end")
      std::printf("end: %s at t=%.3f s\n", rec.at("reason").get<std::string>().c_str(), rec.at("t").get<double>());
  print_audit(report);
  int status = report.ok() ? 0 : 3;
  if (verify) {
    const auto& start = records.front();
    if (start.value("type", "") != "run_start") throw Error(ErrorCode::kConfig, "log does not start with run_start");
    const auto config = parse_scenario(start.at("scenario"));
    std::ostringstream out;
    sim::LogWriter log(&out);
    sim::run_scenario(config, &log);
    std::ifstream original(path);
    const std::string logged((std::istreambuf_iterator<char>(original)), std::istreambuf_iterator<char>());
    const bool same = logged == out.str();
    std::printf("re-simulation %s the log\n", same ? "reproduces" : "DIFFERS from");
    if (!same) status = 4;
  }
  return status;
}

int check(const std::string& path) {
  const auto config = load_scenario(path);
  const auto grid = build_node_grid(config.gait);
  LocomotionProblem problem(config.initial_state(), config.gait, config.terrain, config.setup);
  std::printf("scenario '%s' (version %d) is valid\n", config.name.c_str(), config.version);
  std::printf("window: %d phases, %d nodes at dt=%.3f s; %zu planes, %zu boxes, %zu gaps, %zu spheres; %zu events\n",
              config.gait.horizon(), grid.node_count(), config.gait.dt, config.terrain.planes.size(),
              config.terrain.boxes.size(), config.terrain.gaps.size(), config.terrain.spheres.size(),
              config.events.size());
  const auto& final_state = RobotState(problem.nominal().final_state());
  std::printf("first window nominal final base [%.3f %.3f %.3f]\n", final_state.base_position().x(),
              final_state.base_position().y(), final_state.base_position().z());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online trajectory optimization for a quadruped: scenario runner"};
  app.require_subcommand(1);

  std::string scenario, log_path, replay_path;
  bool headless = false, paused = false, verify = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> port;

  auto* run_cmd = app.add_subcommand("run", "Simulate a scenario");
  run_cmd->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  run_cmd->add_flag("--headless", headless, "No progress output");
  run_cmd->add_option("--seed", seed, "Override the scenario seed");
  run_cmd->add_option("--log", log_path, "Write the JSON-lines log here");
  run_cmd->add_option("--serve", port, "Serve the live API on this port")->check(CLI::Range(0, 65535));
  run_cmd->add_flag("--paused", paused, "With --serve, wait for a start command");

  auto* replay_cmd = app.add_subcommand("replay", "Summarize and audit a run log");
  replay_cmd->add_option("log", replay_path, "Log file")->required()->check(CLI::ExistingFile);
  replay_cmd->add_flag("--verify", verify, "Re-simulate the logged scenario and compare");

  auto* check_cmd = app.add_subcommand("check", "Validate a scenario file");
  check_cmd->add_option("scenario", scenario, "Scenario file")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(scenario, headless, seed, log_path, port, paused);
    if (*replay_cmd) return replay(replay_path, verify);
    if (*check_cmd) return check(scenario);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
