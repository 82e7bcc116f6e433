#pragma once

#include <chrono>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace gt {

/// httplib server on an ephemeral localhost port, served from a thread.
class MockServer {
 public:
  MockServer() = default;
  ~MockServer() { stop(); }
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  httplib::Server& http() { return srv_; }

  void json_route(const std::string& path,
                  std::function<nlohmann::json(const nlohmann::json&, const httplib::Request&)> fn) {
    srv_.Post(path, [fn](const httplib::Request& req, httplib::Response& res) {
      res.set_content(fn(nlohmann::json::parse(req.body), req).dump(), "application/json");
    });
  }

  std::string start() {
    port_ = srv_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { srv_.listen_after_bind(); });
    srv_.wait_until_ready();
    return "http://127.0.0.1:" + std::to_string(port_);
  }

  void stop() {
    if (thread_.joinable()) {
      srv_.stop();
      thread_.join();
    }
  }

 private:
  httplib::Server srv_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace gt
