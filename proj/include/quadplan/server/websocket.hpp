#pragma once

#include <deque>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "quadplan/server/controller.hpp"

namespace quadplan::server {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

class Server;

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, Server& server) : stream_(std::move(socket)), server_(server) {}

  void start() {
    net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->read_request(); });
  }

  /// Queues a text frame; safe from any thread.
  void send(std::shared_ptr<const std::string> text) {
    net::post(ws_ ? ws_->get_executor() : stream_.get_executor(), [self = shared_from_this(), text] {
      if (!self->open_) return;
      self->queue_.push_back(text);
      if (self->queue_.size() == 1) self->write_next();
    });
  }

 private:
  void read_request() {
    http::async_read(stream_, buffer_, request_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->on_request();
    });
  }

  void on_request();
  void read_message();
  void close();

  void write_next() {
    ws_->text(true);
    ws_->async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->close();
        return;
      }
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
    });
  }

  beast::tcp_stream stream_;
  std::unique_ptr<websocket::stream<beast::tcp_stream>> ws_;
  Server& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> request_;
  std::deque<std::shared_ptr<const std::string>> queue_;
  bool open_ = false;
};

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;
  std::string scenario_dir;
  std::string log_path;
};

/// Accepts socket clients on one port, speaks the JSON protocol over WebSocket and answers plain HTTP with a
/// short description.
class Server {
 public:
  explicit Server(const ServerOptions& options)
      : acceptor_(net::make_strand(ioc_)),
        controller_({options.scenario_dir, options.log_path, 25.0}, [this](const json& f) { broadcast(f); }) {
    const tcp::endpoint endpoint(net::ip::make_address(options.address), options.port);
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen();
    accept();
  }

  ~Server() { stop(); }

  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  SessionController& controller() { return controller_; }

  /// Serves on the calling thread until stop() or SIGINT/SIGTERM.
  void run() {
    net::signal_set signals(ioc_, SIGINT, SIGTERM);
    signals.async_wait([this](beast::error_code, int) { ioc_.stop(); });
    ioc_.run();
  }

  void run_in_background() {
    background_ = std::thread([this] { ioc_.run(); });
  }

  void stop() {
    ioc_.stop();
    if (background_.joinable()) background_.join();
  }

  void broadcast(const json& f) {
    auto text = std::make_shared<const std::string>(f.dump());
    std::lock_guard lock(mutex_);
    for (const auto& c : connections_) c->send(text);
  }

  void attach(const std::shared_ptr<Connection>& c) {
    std::lock_guard lock(mutex_);
    connections_.insert(c);
  }
  void detach(const std::shared_ptr<Connection>& c) {
    std::lock_guard lock(mutex_);
    connections_.erase(c);
  }

 private:
  void accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
      if (!ec) std::make_shared<Connection>(std::move(socket), *this)->start();
      accept();
    });
  }

  net::io_context ioc_;
  tcp::acceptor acceptor_;
  std::mutex mutex_;
  std::set<std::shared_ptr<Connection>> connections_;
  std::thread background_;
  SessionController controller_;
};

inline void Connection::on_request() {
  if (!websocket::is_upgrade(request_)) {
    auto res = std::make_shared<http::response<http::string_body>>(http::status::ok, request_.version());
    res->set(http::field::content_type, "text/plain");
    res->body() = "quadplan live API: open a WebSocket on this port and send protocol_version " +
                  std::to_string(kProtocolVersion) + " messages\n";
    res->prepare_payload();
    res->keep_alive(false);
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
    return;
  }
  ws_ = std::make_unique<websocket::stream<beast::tcp_stream>>(std::move(stream_));
  ws_->set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_->async_accept(request_, [self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    self->open_ = true;
    self->server_.attach(self);
    self->queue_.push_back(std::make_shared<const std::string>(
        frame("hello", {{"server", "quadplan"}, {"commands", {"load_scenario", "start", "pause", "set_speed",
                                                             "relocate_obstacle", "set_heading", "get_status"}}})
            .dump()));
    self->write_next();
    self->read_message();
  });
}

inline void Connection::read_message() {
  buffer_.clear();
  ws_->async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) {
      self->close();
      return;
    }
    const std::string text = beast::buffers_to_string(self->buffer_.data());
    if (auto reply = self->server_.controller().handle_text(text))
      self->send(std::make_shared<const std::string>(reply->dump()));
    self->read_message();
  });
}

inline void Connection::close() {
  if (!open_) return;
  open_ = false;
  queue_.clear();
  server_.detach(shared_from_this());
}

}  // namespace quadplan::server
