#include "autolab/http.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace autolab {

using nlohmann::json;

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  const auto start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', start);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

void throw_api_error(const HttpResponse& res) {
  json body = json::parse(res.body, nullptr, false);
  if (body.is_object() && body.contains("error") && body["error"].is_object()) {
    const auto& e = body["error"];
    const auto kind = parse_error_kind(e.value("kind", ""));
    throw Error(kind.value_or(ErrorKind::Validation), e.value("message", "request failed"));
  }
  throw Error(res.status >= 500 ? ErrorKind::IoError : ErrorKind::Validation,
              "HTTP " + std::to_string(res.status) + (res.body.empty() ? "" : ": " + res.body.substr(0, 200)));
}

std::string url_encode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 15];
    }
  }
  return out;
}

namespace {

void configure(httplib::Client& cli, std::chrono::milliseconds timeout, const std::string& token) {
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  if (!token.empty()) cli.set_bearer_token_auth(token);
}

HttpResponse convert(const httplib::Result& r, const std::string& base) {
  if (!r) throw Error(ErrorKind::IoError, "cannot reach " + base + ": " + httplib::to_string(r.error()));
  return {r->status, r->body, r->get_header_value("Content-Type")};
}

}  // namespace

ApiClient::ApiClient(std::string base_url, std::string token, std::chrono::milliseconds timeout)
    : base_(std::move(base_url)), token_(std::move(token)), timeout_(timeout) {
  while (!base_.empty() && base_.back() == '/') base_.pop_back();
  if (base_.find("://") == std::string::npos) base_ = "http://" + base_;
}

HttpResponse ApiClient::request(const std::string& method, const std::string& path, const std::string& body,
                                const std::string& content_type,
                                const std::map<std::string, std::string>& headers) const {
  // A fresh connection per call keeps the client usable from many threads.
  httplib::Client cli(base_);
  configure(cli, timeout_, token_);
  httplib::Headers h(headers.begin(), headers.end());
  if (method == "GET") return convert(cli.Get(path, h), base_);
  if (method == "POST") return convert(cli.Post(path, h, body, content_type), base_);
  if (method == "PUT") return convert(cli.Put(path, h, body, content_type), base_);
  if (method == "DELETE") return convert(cli.Delete(path, h, body, content_type), base_);
  throw Error(ErrorKind::Validation, "unsupported method " + method);
}

HttpResponse ApiClient::post_multipart(const std::string& path, const std::vector<MultipartField>& fields) const {
  httplib::Client cli(base_);
  configure(cli, timeout_, token_);
  httplib::MultipartFormDataItems items;
  for (const auto& f : fields) items.push_back({f.name, f.content, f.filename, f.content_type});
  return convert(cli.Post(path, items), base_);
}

namespace {

json decode(const HttpResponse& res) {
  if (res.status < 200 || res.status >= 300) throw_api_error(res);
  if (res.status == 204 || res.body.empty()) return nullptr;
  json j = json::parse(res.body, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::FormatError, "server sent malformed JSON");
  return j;
}

}  // namespace

json ApiClient::get(const std::string& path) const { return decode(request("GET", path)); }

json ApiClient::post(const std::string& path, const json& body, const std::string& idempotency_key) const {
  std::map<std::string, std::string> headers;
  if (!idempotency_key.empty()) headers["Idempotency-Key"] = idempotency_key;
  return decode(request("POST", path, body.dump(), "application/json", headers));
}

std::string ApiClient::get_text(const std::string& path) const {
  auto res = request("GET", path);
  if (res.status < 200 || res.status >= 300) throw_api_error(res);
  return res.body;
}

// ---------------------------------------------------------------------------

std::string HttpTransport::register_worker(const std::string& worker_id, std::size_t capacity) {
  return client_.post("/workers", {{"worker_id", worker_id}, {"capacity", capacity}}).at("worker_id");
}

void HttpTransport::heartbeat(const std::string& worker_id) {
  client_.post("/workers/" + url_encode(worker_id) + "/heartbeat");
}

std::optional<Job> HttpTransport::next_job(const std::string& worker_id) {
  auto j = client_.post("/workers/" + url_encode(worker_id) + "/next");
  if (j.is_null()) return std::nullopt;
  return j.get<Job>();
}

void HttpTransport::complete_job(const std::string& job_id, const std::string& worker_id, const JobOutcome& outcome) {
  client_.post("/jobs/" + url_encode(job_id) + "/complete", {{"worker_id", worker_id}, {"outcome", outcome}});
}

std::pair<DatasetRecord, std::string> HttpTransport::fetch_dataset(const std::string& dataset_id) {
  auto record = client_.get("/datasets/" + url_encode(dataset_id)).get<DatasetRecord>();
  auto bytes = client_.get_text("/datasets/" + url_encode(dataset_id) + "/data");
  return {std::move(record), std::move(bytes)};
}

// ---------------------------------------------------------------------------

WebhookNotifier::WebhookNotifier(WebhookOptions options) : options_(std::move(options)) {
  if (!enabled()) return;
  std::tie(host_, path_) = split_url(options_.url);
  thread_ = std::thread([this] { run(); });
}

WebhookNotifier::~WebhookNotifier() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void WebhookNotifier::send(const NotificationEvent& event) {
  if (!enabled()) return;
  {
    std::lock_guard lock(mutex_);
    queue_.push_back(json(event).dump());
  }
  cv_.notify_all();
}

bool WebhookNotifier::flush(std::chrono::milliseconds timeout) {
  if (!enabled()) return true;
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [&] { return queue_.empty() && !busy_; });
}

void WebhookNotifier::run() {
  std::unique_lock lock(mutex_);
  while (true) {
    cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
    if (queue_.empty()) return;  // stopping and drained
    std::string body = std::move(queue_.front());
    queue_.pop_front();
    busy_ = true;
    lock.unlock();
    if (deliver(body)) ++delivered_;
    else ++failed_;
    lock.lock();
    busy_ = false;
    cv_.notify_all();
  }
}

bool WebhookNotifier::deliver(const std::string& body) {
  auto backoff = options_.backoff;
  for (std::size_t attempt = 1; attempt <= options_.attempts; ++attempt) {
    ++attempts_;
    httplib::Client cli(host_);
    configure(cli, options_.timeout, "");
    auto res = cli.Post(path_, body, "application/json");
    if (res && res->status >= 200 && res->status < 300) return true;
    const std::string why = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    spdlog::warn("webhook attempt {}/{} to {} failed: {}", attempt, options_.attempts, options_.url, why);
    if (attempt < options_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  spdlog::error("webhook delivery to {} abandoned after {} attempts", options_.url, options_.attempts);
  return false;
}

}  // namespace autolab
