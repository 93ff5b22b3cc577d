#pragma once

// REST client, remote worker transport and webhook delivery. httplib stays
// out of this header.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "autolab/ai.hpp"
#include "autolab/controller.hpp"

namespace autolab {

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

/// Splits "http://host:port/path" into ("http://host:port", "/path").
std::pair<std::string, std::string> split_url(const std::string& url);

/// Throws the domain error carried by an API error body, or Validation/IoError
/// when the body is not one.
[[noreturn]] void throw_api_error(const HttpResponse& res);

struct MultipartField {
  std::string name;
  std::string content;
  std::string filename;
  std::string content_type;
};

/// Blocking JSON client for the REST API. Safe to share between threads.
class ApiClient {
 public:
  explicit ApiClient(std::string base_url, std::string token = "",
                     std::chrono::milliseconds timeout = std::chrono::seconds(60));

  /// Raw exchange; throws IoError when the server cannot be reached.
  HttpResponse request(const std::string& method, const std::string& path, const std::string& body = "",
                       const std::string& content_type = "application/json",
                       const std::map<std::string, std::string>& headers = {}) const;
  HttpResponse post_multipart(const std::string& path, const std::vector<MultipartField>& fields) const;

  /// Decoded JSON body of a 2xx response (null for 204). Throws the error
  /// carried by any other status.
  nlohmann::json get(const std::string& path) const;
  nlohmann::json post(const std::string& path, const nlohmann::json& body = nlohmann::json::object(),
                      const std::string& idempotency_key = "") const;
  /// Body of a 2xx response as text.
  std::string get_text(const std::string& path) const;

  const std::string& base_url() const { return base_; }

 private:
  std::string base_;
  std::string token_;
  std::chrono::milliseconds timeout_;
};

/// Percent-encodes a query-string component.
std::string url_encode(std::string_view s);

/// Worker side of the controller protocol over REST.
class HttpTransport final : public WorkerTransport {
 public:
  explicit HttpTransport(std::string base_url, std::string token = "") : client_(std::move(base_url), std::move(token)) {}

  std::string register_worker(const std::string& worker_id, std::size_t capacity) override;
  void heartbeat(const std::string& worker_id) override;
  std::optional<Job> next_job(const std::string& worker_id) override;
  void complete_job(const std::string& job_id, const std::string& worker_id, const JobOutcome& outcome) override;
  std::pair<DatasetRecord, std::string> fetch_dataset(const std::string& dataset_id) override;

 private:
  ApiClient client_;
};

struct WebhookOptions {
  std::string url;
  std::size_t attempts = 3;
  std::chrono::milliseconds backoff{200};
  std::chrono::milliseconds timeout{5000};
};

/// Posts notification events to a webhook from a background thread. Each
/// event gets up to `attempts` tries with exponential backoff; failures are
/// logged and dropped. With no URL every send is a successful no-op.
class WebhookNotifier {
 public:
  explicit WebhookNotifier(WebhookOptions options);
  ~WebhookNotifier();
  WebhookNotifier(const WebhookNotifier&) = delete;
  WebhookNotifier& operator=(const WebhookNotifier&) = delete;

  bool enabled() const { return !options_.url.empty(); }
  void send(const NotificationEvent& event);
  /// Waits until every queued event was delivered or given up on.
  bool flush(std::chrono::milliseconds timeout);

  std::size_t delivered() const { return delivered_.load(); }
  std::size_t failed() const { return failed_.load(); }
  std::size_t attempts() const { return attempts_.load(); }

 private:
  void run();
  bool deliver(const std::string& body);

  WebhookOptions options_;
  std::string host_;
  std::string path_;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::string> queue_;
  bool busy_ = false;
  bool stopping_ = false;
  std::atomic<std::size_t> delivered_{0}, failed_{0}, attempts_{0};
  std::thread thread_;
};

}  // namespace autolab
