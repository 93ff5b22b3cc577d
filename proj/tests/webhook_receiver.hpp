#pragma once

// Minimal HTTP endpoint that records every webhook body it receives.

#include <httplib.h>

#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

namespace autolab::testing {

struct WebhookReceiver {
  httplib::Server server;
  std::thread thread;
  std::mutex mutex;
  std::vector<std::string> bodies;
  int port = 0;

  WebhookReceiver() {
    server.Post("/hook", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mutex);
      bodies.push_back(req.body);
      res.status = 204;
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
  }
  ~WebhookReceiver() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/hook"; }
  std::vector<nlohmann::json> events() {
    std::lock_guard lock(mutex);
    std::vector<nlohmann::json> out;
    for (const auto& b : bodies) out.push_back(nlohmann::json::parse(b));
    return out;
  }
};

}  // namespace autolab::testing
