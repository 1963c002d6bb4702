// Walks a few steps in closed loop and drops a box in front of the robot halfway through.
#include <cstdio>

#include "quadplan/sim/simulation.hpp"

using namespace quadplan;

int main() {
  ScenarioConfig config;
  config.name = "sample";
  config.terrain.boxes.push_back({"box", Vec2(0.75, 5.0), Vec2(0.8, 1.0), 0.0, 0.15});
  config.duration_steps = 6;
  config.validate();

  sim::LogWriter log;
  log.add_listener([](const json& rec) {
    if (rec.at("kind") == "event" && rec.at("type") == "touchdown")
      std::printf("t=%.3f %s on %s\n", rec.at("t").get<double>(), rec.at("leg").get<std::string>().c_str(),
                  rec.at("surface").is_null() ? "nothing" : rec.at("surface").get<std::string>().c_str());
  });

  sim::Simulation sim(config, &log);
  bool moved = false;
  while (sim.tick()) {
    if (!moved && sim.summary().touchdowns == 1) {
      sim.relocate_obstacle("box", {0.75, 0.0}, "sample");
      moved = true;
    }
  }
  const auto& s = sim.summary();
  std::printf("%s: %d touchdowns, %d plans, base at x=%.3f z=%.3f\n", s.reason.c_str(), s.touchdowns, s.plans_issued,
              s.final_state.base_position().x(), s.final_state.base_position().z());
  return s.reason == "completed" ? 0 : 1;
}
