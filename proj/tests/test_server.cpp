#include <gtest/gtest.h>

#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "quadplan/server/websocket.hpp"
#include "test_support.hpp"

namespace quadplan::server {
namespace {

using namespace std::chrono_literals;

class Collector {
 public:
  void operator()(const json& f) {
    {
      std::lock_guard lock(mutex_);
      frames_.push_back(f);
    }
    cv_.notify_all();
  }

  /// Waits for the first frame, at or after index `from`, that satisfies pred.
  std::optional<json> wait_for(const std::function<bool(const json&)>& pred, std::chrono::milliseconds timeout,
                               std::size_t from = 0) {
    std::unique_lock lock(mutex_);
    std::optional<json> found;
    cv_.wait_for(lock, timeout, [&] {
      for (std::size_t i = from; i < frames_.size(); ++i)
        if (pred(frames_[i])) {
          found = frames_[i];
          return true;
        }
      return false;
    });
    return found;
  }

  std::vector<json> snapshot() const {
    std::lock_guard lock(mutex_);
    return frames_;
  }

  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return frames_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::vector<json> frames_;
};

auto of_type(const std::string& type) {
  return [type](const json& f) { return f.at("type") == type; };
}

auto ack_for(const std::string& command) {
  return [command](const json& f) { return f.at("type") == "ack" && f.at("command") == command; };
}

json msg(const std::string& type, json body = json::object()) {
  body["protocol_version"] = kProtocolVersion;
  body["type"] = type;
  return body;
}

json scenario(const std::string& name) {
  return read_json_file((testing::scenario_dir() / (name + ".json")).string());
}

struct Session {
  std::shared_ptr<Collector> frames = std::make_shared<Collector>();
  SessionController controller{{testing::scenario_dir().string(), "", 25.0},
                               [f = frames](const json& j) { (*f)(j); }};
};

TEST(Protocol, EnvelopeErrors) {
  Session s;
  auto reply = s.controller.handle_text("{not json");
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->at("code"), "malformed");
  EXPECT_EQ(reply->at("protocol_version"), kProtocolVersion);

  reply = s.controller.handle(json{{"type", "start"}, {"id", 4}});
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->at("code"), "protocol");
  EXPECT_EQ(reply->at("id"), 4);

  reply = s.controller.handle(json{{"type", "start"}, {"protocol_version", 2}});
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->at("code"), "protocol");

  reply = s.controller.handle(msg("fly"));
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->at("code"), "unknown_command");

  reply = s.controller.handle(json::array());
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->at("code"), "malformed");

  EXPECT_FALSE(s.controller.handle(msg("start", {{"id", 9}})));
  const auto err = s.frames->wait_for(of_type("error"), 2s);
  ASSERT_TRUE(err);
  EXPECT_EQ(err->at("code"), "no_scenario");
  EXPECT_EQ(err->at("id"), 9);
}

TEST(Protocol, LoadByNameAndStatus) {
  Session s;
  s.controller.handle(msg("load_scenario", {{"name", "../flat_walk"}}));
  const auto err = s.frames->wait_for(of_type("error"), 5s);
  ASSERT_TRUE(err);
  EXPECT_EQ(err->at("code"), "invalid");

  s.controller.handle(msg("load_scenario", {{"name", "flat_walk"}, {"id", "a"}}));
  const auto ack = s.frames->wait_for(ack_for("load_scenario"), 10s);
  ASSERT_TRUE(ack);
  EXPECT_EQ(ack->at("id"), "a");
  EXPECT_EQ(ack->at("status").at("scenario"), "flat_walk");
  EXPECT_EQ(ack->at("status").at("running"), false);

  s.controller.handle(msg("get_status"));
  const auto status = s.frames->wait_for(ack_for("get_status"), 5s);
  ASSERT_TRUE(status);
  EXPECT_EQ(status->at("status").at("loaded"), true);
  EXPECT_DOUBLE_EQ(status->at("status").at("t").get<double>(), 0.0);
}

TEST(Protocol, InvalidArguments) {
  Session s;
  s.controller.handle(msg("load_scenario", {{"name", "relocated_box"}}));
  ASSERT_TRUE(s.frames->wait_for(ack_for("load_scenario"), 10s));
  s.controller.handle(msg("set_speed", {{"speed", 0}, {"id", 1}}));
  s.controller.handle(msg("relocate_obstacle", {{"obstacle_id", "crate"}, {"position", {1, 0}}, {"id", 2}}));
  s.controller.handle(msg("relocate_obstacle", {{"position", {1, 0}}, {"id", 3}}));
  const auto e1 = s.frames->wait_for([](const json& f) { return f.at("type") == "error" && f.at("id") == 1; }, 5s);
  const auto e2 = s.frames->wait_for([](const json& f) { return f.at("type") == "error" && f.at("id") == 2; }, 5s);
  const auto e3 = s.frames->wait_for([](const json& f) { return f.at("type") == "error" && f.at("id") == 3; }, 5s);
  ASSERT_TRUE(e1 && e2 && e3);
  EXPECT_EQ(e1->at("code"), "invalid");
  EXPECT_EQ(e2->at("code"), "unknown_obstacle");
  EXPECT_EQ(e3->at("code"), "malformed");
}

TEST(Session, PauseFreezesTimeAndResumeContinues) {
  Session s;
  s.controller.handle(msg("load_scenario", {{"name", "flat_walk"}}));
  s.controller.handle(msg("set_speed", {{"speed", 2.0}}));
  s.controller.handle(msg("start"));
  ASSERT_TRUE(s.frames->wait_for([](const json& f) { return f.at("type") == "state" && f.at("t") > 0.1; }, 20s));
  s.controller.handle(msg("pause"));
  const auto paused = s.frames->wait_for(ack_for("pause"), 5s);
  ASSERT_TRUE(paused);
  const double t_pause = paused->at("t").get<double>();
  std::this_thread::sleep_for(300ms);
  const std::size_t mark = s.frames->size();
  std::this_thread::sleep_for(300ms);
  for (const auto& f : s.frames->snapshot())
    if (f.at("type") == "state") EXPECT_LE(f.at("t").get<double>(), t_pause + 1e-12);
  EXPECT_EQ(s.frames->size(), mark);

  s.controller.handle(msg("start"));
  const auto resumed = s.frames->wait_for(
      [&](const json& f) { return f.at("type") == "state" && f.at("t").get<double>() > t_pause; }, 20s, mark);
  ASSERT_TRUE(resumed);
  // No jump in simulated time across the pause.
  EXPECT_LT(resumed->at("t").get<double>() - t_pause, 0.25);

  std::uint64_t last_seq = 0;
  for (const auto& f : s.frames->snapshot()) {
    if (f.at("type") != "state") continue;
    EXPECT_GT(f.at("seq").get<std::uint64_t>(), last_seq);
    last_seq = f.at("seq").get<std::uint64_t>();
  }
  std::vector<std::string> events;
  for (const auto& f : s.frames->snapshot())
    if (f.at("type") == "log" && f.at("record").at("kind") == "event") events.push_back(f.at("record").at("type"));
  EXPECT_NE(std::find(events.begin(), events.end(), "pause"), events.end());
  EXPECT_NE(std::find(events.begin(), events.end(), "resume"), events.end());
}

TEST(Session, SpeedScalesSimulatedTime) {
  Session s;
  json flat = scenario("flat_walk");
  flat["duration"] = {{"steps", 2}};
  s.controller.handle(msg("load_scenario", {{"scenario", flat}}));
  s.controller.handle(msg("set_speed", {{"speed", 50.0}}));
  s.controller.handle(msg("start"));
  const auto done = s.frames->wait_for(of_type("finished"), 30s);
  ASSERT_TRUE(done);
  EXPECT_EQ(done->at("reason"), "completed");
  EXPECT_TRUE(s.controller.wait_finished(1s));
}

TEST(Session, RelocationWhilePausedIsDeferred) {
  Session s;
  json box = scenario("relocated_box");
  box["events"] = json::array();
  box["duration"] = {{"steps", 2}};
  s.controller.handle(msg("load_scenario", {{"scenario", box}}));
  ASSERT_TRUE(s.frames->wait_for(ack_for("load_scenario"), 10s));
  s.controller.handle(msg("relocate_obstacle", {{"obstacle_id", "box"}, {"position", {0.75, 0.0}}, {"id", 5}}));
  EXPECT_FALSE(s.frames->wait_for(ack_for("relocate_obstacle"), 300ms));
  s.controller.handle(msg("set_speed", {{"speed", 20.0}}));
  s.controller.handle(msg("start"));
  const auto ack = s.frames->wait_for(ack_for("relocate_obstacle"), 5s);
  ASSERT_TRUE(ack);
  EXPECT_EQ(ack->at("id"), 5);
  const auto event = s.frames->wait_for(
      [](const json& f) {
        return f.at("type") == "log" && f.at("record").at("kind") == "event" &&
               f.at("record").at("type") == "relocate_obstacle";
      },
      5s);
  ASSERT_TRUE(event);
  EXPECT_EQ(event->at("record").at("source"), "api");
  EXPECT_DOUBLE_EQ(event->at("record").at("t").get<double>(), 0.0);
}

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

bool plan_climbs(const json& plan) {
  for (const auto& x : plan.at("x")) {
    const RobotState s(sim::from_json_array<kStateDim>(x));
    for (int i = 0; i < kLegCount; ++i)
      if (std::abs(s.foot_position(i).z() - 0.15) < 1e-3) return true;
  }
  return false;
}

TEST(WebSocket, LiveRelocationReachesPlans) {
  Server server({"127.0.0.1", 0, testing::scenario_dir().string(), ""});
  server.run_in_background();

  boost::asio::io_context ioc;
  websocket::stream<tcp::socket> ws(ioc);
  tcp::resolver resolver(ioc);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
  ws.handshake("127.0.0.1", "/");
  beast::flat_buffer buffer;
  const auto read = [&] {
    buffer.clear();
    ws.read(buffer);
    return json::parse(beast::buffers_to_string(buffer.data()));
  };
  const auto send = [&](const json& m) { ws.write(boost::asio::buffer(m.dump())); };

  const json hello = read();
  EXPECT_EQ(hello.at("type"), "hello");
  EXPECT_EQ(hello.at("protocol_version"), kProtocolVersion);

  send(json{{"type", "start"}});
  const json rejected = read();
  EXPECT_EQ(rejected.at("type"), "error");
  EXPECT_EQ(rejected.at("code"), "protocol");

  json box = scenario("relocated_box");
  box["events"] = json::array();
  box["duration"] = {{"steps", 6}};
  send(msg("load_scenario", {{"scenario", box}}));
  send(msg("set_speed", {{"speed", 20.0}}));
  send(msg("start"));
  send(msg("relocate_obstacle", {{"obstacle_id", "box"}, {"position", {0.75, 0.0}}}));

  bool saw_state = false, saw_climb = false;
  double relocated_at = -1.0;
  for (int i = 0; i < 5000 && !saw_climb; ++i) {
    const json f = read();
    ASSERT_EQ(f.at("protocol_version"), kProtocolVersion);
    if (f.at("type") == "state") saw_state = true;
    if (f.at("type") == "finished") break;
    if (f.at("type") != "log") continue;
    const auto& rec = f.at("record");
    if (rec.at("kind") == "event" && rec.at("type") == "relocate_obstacle") relocated_at = rec.at("t").get<double>();
    if (rec.at("kind") == "plan" && relocated_at >= 0.0 && rec.at("t").get<double>() >= relocated_at)
      saw_climb = plan_climbs(rec);
  }
  EXPECT_TRUE(saw_state);
  EXPECT_GE(relocated_at, 0.0);
  EXPECT_TRUE(saw_climb);

  // The run carries on without any client.
  beast::error_code ec;
  ws.next_layer().close(ec);
  EXPECT_TRUE(server.controller().wait_finished(60s));

  // Plain HTTP gets a description instead of an upgrade.
  tcp::socket socket(ioc);
  boost::asio::connect(socket, resolver.resolve("127.0.0.1", std::to_string(server.port())));
  http::request<http::empty_body> req(http::verb::get, "/", 11);
  req.set(http::field::host, "127.0.0.1");
  http::write(socket, req);
  http::response<http::string_body> res;
  beast::flat_buffer http_buffer;
  http::read(socket, http_buffer, res);
  EXPECT_EQ(res.result(), http::status::ok);
  EXPECT_NE(res.body().find("protocol_version"), std::string::npos);
  server.stop();
}

}  // namespace
}  // namespace quadplan::server
