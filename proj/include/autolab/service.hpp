#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "autolab/ai.hpp"
#include "autolab/controller.hpp"
#include "autolab/http.hpp"
#include "autolab/recommender.hpp"
#include "autolab/store.hpp"

namespace httplib {
class Server;
}

namespace autolab {

struct ServiceConfig {
  std::string listen_addr = "127.0.0.1:8080";
  std::filesystem::path data_dir = "autolab-data";
  std::filesystem::path kb_path;
  std::filesystem::path rules_path;
  std::string webhook_url;
  std::string api_token;
  std::int64_t lease_ttl_secs = 300;
  std::size_t max_attempts = 3;
  /// In-process worker threads started with the service.
  std::size_t local_workers = 0;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Process environment.
std::optional<std::string> process_env(const std::string& name);

/// Defaults, then `file` (KEY=value lines, # comments), then the
/// environment: LISTEN_ADDR, DATA_DIR, KB_PATH, RULES_PATH, WEBHOOK_URL,
/// API_TOKEN, LEASE_TTL_SECS, MAX_ATTEMPTS, WORKERS. Throws IoError, FormatError.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env = process_env);

/// "host:port" -> (host, port). Throws FormatError.
std::pair<std::string, int> parse_listen_addr(const std::string& addr);

/// HTTP status for a domain error.
int http_status(ErrorKind kind);

/// The assembled service: store, controller, recommender, AI engine,
/// notifier and REST routes.
class Service {
 public:
  /// `clock` defaults to the system clock.
  explicit Service(ServiceConfig config, const Clock* clock = nullptr);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread. Port 0 in the listen address
  /// picks a free port. Returns the bound port. Throws IoError.
  int start();
  /// Blocks until stop() is called (from another thread or a signal).
  void wait();
  void stop();
  int port() const { return port_; }
  std::string base_url() const;

  const ServiceConfig& config() const { return config_; }
  ExperimentStore& store() { return *store_; }
  Controller& controller() { return *controller_; }
  Recommender& recommender() { return recommender_; }
  AiEngine& ai() { return *ai_; }
  WebhookNotifier& notifier() { return *notifier_; }

 private:
  void load_knowledge();
  void register_routes();
  void reaper_loop();

  ServiceConfig config_;
  std::unique_ptr<Clock> owned_clock_;
  const Clock* clock_;
  std::unique_ptr<ExperimentStore> store_;
  std::unique_ptr<Controller> controller_;
  Recommender recommender_;
  std::unique_ptr<WebhookNotifier> notifier_;
  std::unique_ptr<AiEngine> ai_;
  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<WorkerPool> pool_;

  std::thread server_thread_;
  std::thread reaper_thread_;
  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
  bool stopped_ = false;
  int port_ = 0;

  std::mutex kb_mutex_;

  struct Replay {
    int status;
    std::string body;
    std::string content_type;
  };
  std::mutex replay_mutex_;
  std::map<std::string, Replay> replays_;
};

}  // namespace autolab
