#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <thread>

#include "quadplan/config.hpp"
#include "quadplan/sim/simulation.hpp"

namespace quadplan::server {

inline constexpr int kProtocolVersion = 1;

inline json frame(const std::string& type, json body = json::object()) {
  body["protocol_version"] = kProtocolVersion;
  body["type"] = type;
  return body;
}

inline json error_frame(const json& id, const std::string& code, const std::string& message) {
  return frame("error", {{"id", id}, {"code", code}, {"message", message}});
}

struct ControllerOptions {
  /// Shipped scenarios that load_scenario may refer to by name.
  std::string scenario_dir;
  /// Each loaded run is logged here when set.
  std::string log_path;
  double frame_rate = 25.0;
};

/// Owns the simulation thread. Commands arrive as protocol messages from any thread and are applied between
/// control ticks; everything outbound goes through the emit callback.
class SessionController {
 public:
  using Emit = std::function<void(const json&)>;

  SessionController(ControllerOptions options, Emit emit)
      : options_(std::move(options)), emit_(std::move(emit)), thread_([this] { loop(); }) {}

  ~SessionController() {
    {
      std::lock_guard lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_all();
    thread_.join();
  }

  SessionController(const SessionController&) = delete;
  SessionController& operator=(const SessionController&) = delete;

  /// Validates the envelope; returns an error frame for the sender when the message is rejected outright.
  std::optional<json> handle_text(const std::string& text) {
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::exception& e) {
      return error_frame(nullptr, "malformed", std::string("not valid JSON: ") + e.what());
    }
    return handle(msg);
  }

  std::optional<json> handle(const json& msg) {
    if (!msg.is_object()) return error_frame(nullptr, "malformed", "message must be a JSON object");
    const json id = msg.contains("id") ? msg.at("id") : json(nullptr);
    if (!msg.contains("protocol_version"))
      return error_frame(id, "protocol", "protocol_version is required");
    if (msg.at("protocol_version") != kProtocolVersion)
      return error_frame(id, "protocol", "unsupported protocol_version; this server speaks " +
                                             std::to_string(kProtocolVersion));
    if (!msg.contains("type") || !msg.at("type").is_string())
      return error_frame(id, "malformed", "type is required");
    static const std::array<std::string, 7> known{"load_scenario", "start", "pause", "set_speed",
                                                  "relocate_obstacle", "set_heading", "get_status"};
    const auto type = msg.at("type").get<std::string>();
    if (std::find(known.begin(), known.end(), type) == known.end())
      return error_frame(id, "unknown_command", "unknown command '" + type + "'");
    push(msg);
    return std::nullopt;
  }

  /// Direct entry points for the command line, equivalent to the corresponding messages.
  void load(const ScenarioConfig& config) {
    std::lock_guard lock(mutex_);
    preloaded_ = config;
    commands_.push_back(frame("load_scenario", {{"id", nullptr}}));
    cv_.notify_all();
  }
  void start() { push(frame("start", {{"id", nullptr}})); }
  void pause() { push(frame("pause", {{"id", nullptr}})); }

  /// Blocks until the loaded run ends or the timeout expires.
  bool wait_finished(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    return done_cv_.wait_for(lock, timeout, [this] { return finished_; });
  }

 private:
  void push(const json& msg) {
    {
      std::lock_guard lock(mutex_);
      commands_.push_back(msg);
    }
    cv_.notify_all();
  }

  void send(const json& f) {
    if (emit_) emit_(f);
  }

  void ack(const json& cmd, json extra = json::object()) {
    extra["id"] = cmd.value("id", json(nullptr));
    extra["command"] = cmd.at("type");
    send(frame("ack", extra));
  }

  json status() const {
    json s = {{"loaded", sim_ != nullptr}, {"running", running_}, {"speed", speed_}};
    if (sim_) {
      s["scenario"] = sim_->config().name;
      s["t"] = sim_->time();
      s["finished"] = sim_->finished();
      s["touchdowns"] = sim_->summary().touchdowns;
    }
    return s;
  }

  void state_frame() {
    const auto& x = sim_->plant();
    json feet = json::array();
    for (int i = 0; i < kLegCount; ++i) feet.push_back(sim::to_json_array(x.foot_position(i)));
    const auto plan = sim_->current_plan();
    send(frame("state", {{"seq", ++frame_seq_},
                         {"t", sim_->time()},
                         {"running", running_},
                         {"speed", speed_},
                         {"base_position", sim::to_json_array(x.base_position())},
                         {"base_orientation", sim::to_json_array(x.base_orientation())},
                         {"feet", feet},
                         {"plan_id", plan ? plan->id : -1}}));
  }

  void load_config(const ScenarioConfig& config) {
    sim_.reset();
    log_file_.reset();
    log_ = std::make_unique<sim::LogWriter>();
    if (!options_.log_path.empty()) {
      log_file_ = std::make_unique<std::ofstream>(options_.log_path);
      *log_ = sim::LogWriter(log_file_.get());
    }
    log_->add_listener([this](const json& rec) {
      if (rec.at("kind") != "state") send(frame("log", {{"record", rec}}));
    });
    running_ = false;
    {
      std::lock_guard lock(mutex_);
      finished_ = false;
    }
    sim_ = std::make_unique<sim::Simulation>(config, log_.get());
    deferred_.clear();
  }

  ScenarioConfig resolve_scenario(const json& cmd) {
    if (cmd.contains("scenario")) return parse_scenario(cmd.at("scenario"));
    if (!cmd.contains("name")) throw Error(ErrorCode::kConfig, "load_scenario needs 'scenario' or 'name'");
    const auto name = cmd.at("name").get<std::string>();
    if (!std::regex_match(name, std::regex("[A-Za-z0-9_-]+")))
      throw Error(ErrorCode::kConfig, "scenario names may only use letters, digits, '-' and '_'");
    const auto path = std::filesystem::path(options_.scenario_dir) / (name + ".json");
    return load_scenario(path.string());
  }

  /// Applies a simulation-changing command now, or defers it while paused.
  void apply_to_sim(const json& cmd) {
    const auto type = cmd.at("type").get<std::string>();
    if (type == "relocate_obstacle") {
      sim_->relocate_obstacle(cmd.at("obstacle_id").get<std::string>(), cmd.at("position").get<std::vector<double>>(),
                              "api");
    } else {
      double radians = 0.0;
      if (cmd.contains("heading_deg")) radians = cmd.at("heading_deg").get<double>() * std::numbers::pi / 180.0;
      else radians = cmd.at("heading_rad").get<double>();
      sim_->set_heading(radians, "api");
    }
    ack(cmd, {{"t", sim_->time()}});
  }

  void execute(const json& cmd) {
    const auto type = cmd.at("type").get<std::string>();
    const json id = cmd.value("id", json(nullptr));
    try {
      if (type == "get_status") {
        ack(cmd, {{"status", status()}});
        return;
      }
      if (type == "load_scenario") {
        if (cmd.contains("scenario") || cmd.contains("name")) {
          load_config(resolve_scenario(cmd));
        } else {
          std::optional<ScenarioConfig> config;
          {
            std::lock_guard lock(mutex_);
            config.swap(preloaded_);
          }
          if (!config) throw Error(ErrorCode::kConfig, "load_scenario needs 'scenario' or 'name'");
          load_config(*config);
        }
        ack(cmd, {{"status", status()}});
        return;
      }
      if (!sim_) {
        send(error_frame(id, "no_scenario", "load a scenario first"));
        return;
      }
      if (type == "start") {
        running_ = true;
        last_wall_ = std::chrono::steady_clock::now();
        for (const auto& d : deferred_) {
          try {
            apply_to_sim(d);
          } catch (const Error& e) {
            send(error_frame(d.value("id", json(nullptr)), e.code() == ErrorCode::kUnknownObstacle ? "unknown_obstacle" : "invalid", e.what()));
          }
        }
        deferred_.clear();
        sim_->note("resume", {{"source", "api"}});
        ack(cmd, {{"t", sim_->time()}});
      } else if (type == "pause") {
        running_ = false;
        sim_->note("pause", {{"source", "api"}});
        ack(cmd, {{"t", sim_->time()}});
        state_frame();
      } else if (type == "set_speed") {
        const double speed = cmd.at("speed").get<double>();
        if (!(speed > 0.0 && speed <= 100.0)) throw Error(ErrorCode::kInvalidArgument, "speed must be in (0, 100]");
        speed_ = speed;
        ack(cmd, {{"speed", speed_}});
      } else if (type == "relocate_obstacle" || type == "set_heading") {
        if (type == "relocate_obstacle" && !sim_->terrain().has_obstacle(cmd.at("obstacle_id").get<std::string>()))
          throw Error(ErrorCode::kUnknownObstacle, "unknown obstacle '" + cmd.at("obstacle_id").get<std::string>() + "'");
        if (running_) apply_to_sim(cmd);
        else deferred_.push_back(cmd);
      }
    } catch (const Error& e) {
      send(error_frame(id, e.code() == ErrorCode::kUnknownObstacle ? "unknown_obstacle" : "invalid", e.what()));
    } catch (const json::exception& e) {
      send(error_frame(id, "malformed", e.what()));
    }
  }

  void advance() {
    const auto now = std::chrono::steady_clock::now();
    const double elapsed = std::min(0.1, std::chrono::duration<double>(now - last_wall_).count());
    last_wall_ = now;
    const double target = sim_->time() + elapsed * speed_;
    while (!sim_->finished() && sim_->time() < target) sim_->tick();
    if (sim_->finished()) {
      running_ = false;
      state_frame();
      send(frame("finished", {{"reason", sim_->summary().reason}, {"t", sim_->time()}}));
      if (log_file_) log_file_->flush();
      {
        std::lock_guard lock(mutex_);
        finished_ = true;
      }
      done_cv_.notify_all();
    }
  }

  void loop() {
    const auto frame_period = std::chrono::duration<double>(1.0 / options_.frame_rate);
    auto next_frame = std::chrono::steady_clock::now();
    for (;;) {
      std::deque<json> batch;
      {
        std::unique_lock lock(mutex_);
        cv_.wait_for(lock, std::chrono::milliseconds(5), [this] { return stopping_ || !commands_.empty(); });
        if (stopping_) break;
        batch.swap(commands_);
      }
      for (const auto& cmd : batch) execute(cmd);
      if (sim_ && running_ && !sim_->finished()) {
        advance();
        const auto now = std::chrono::steady_clock::now();
        if (running_ && now >= next_frame) {
          state_frame();
          next_frame = now + std::chrono::duration_cast<std::chrono::steady_clock::duration>(frame_period);
        }
      }
    }
    sim_.reset();
  }

  ControllerOptions options_;
  Emit emit_;
  std::mutex mutex_;
  std::condition_variable cv_, done_cv_;
  std::deque<json> commands_;
  std::optional<ScenarioConfig> preloaded_;
  bool stopping_ = false;
  bool finished_ = false;

  // Owned by the simulation thread.
  std::unique_ptr<std::ofstream> log_file_;
  std::unique_ptr<sim::LogWriter> log_;
  std::unique_ptr<sim::Simulation> sim_;
  std::vector<json> deferred_;
  bool running_ = false;
  double speed_ = 1.0;
  std::uint64_t frame_seq_ = 0;
  std::chrono::steady_clock::time_point last_wall_ = std::chrono::steady_clock::now();

  std::thread thread_;
};

}  // namespace quadplan::server
