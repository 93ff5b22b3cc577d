#include "autolab/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "autolab/reporting.hpp"

namespace autolab {

using nlohmann::json;

std::optional<std::string> process_env(const std::string& name) {
  const char* v = std::getenv(name.c_str());
  if (!v) return std::nullopt;
  return std::string(v);
}

namespace {

void apply_setting(ServiceConfig& c, const std::string& key, const std::string& value) {
  auto integer = [&](const std::string& what) {
    auto v = parse_number(value);
    if (!v || *v < 0 || *v != std::floor(*v)) throw Error(ErrorKind::FormatError, what + " must be a non-negative integer");
    return static_cast<std::int64_t>(*v);
  };
  if (key == "LISTEN_ADDR") c.listen_addr = value;
  else if (key == "DATA_DIR") c.data_dir = value;
  else if (key == "KB_PATH") c.kb_path = value;
  else if (key == "RULES_PATH") c.rules_path = value;
  else if (key == "WEBHOOK_URL") c.webhook_url = value;
  else if (key == "API_TOKEN") c.api_token = value;
  else if (key == "LEASE_TTL_SECS") c.lease_ttl_secs = integer(key);
  else if (key == "MAX_ATTEMPTS") c.max_attempts = static_cast<std::size_t>(integer(key));
  else if (key == "WORKERS") c.local_workers = static_cast<std::size_t>(integer(key));
  else throw Error(ErrorKind::FormatError, "unknown config key '" + key + "'");
}

const char* const kConfigKeys[] = {"LISTEN_ADDR", "DATA_DIR",       "KB_PATH",      "RULES_PATH", "WEBHOOK_URL",
                                   "API_TOKEN",   "LEASE_TTL_SECS", "MAX_ATTEMPTS", "WORKERS"};

}  // namespace

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& file, const EnvLookup& env) {
  ServiceConfig c;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw Error(ErrorKind::IoError, "cannot read config file " + file->string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorKind::FormatError, file->string() + ":" + std::to_string(n) + ": expected KEY=value");
      std::string key = trim(t.substr(0, eq));
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::toupper(ch); });
      apply_setting(c, key, trim(t.substr(eq + 1)));
    }
  }
  for (const char* key : kConfigKeys)
    if (auto v = env(key)) apply_setting(c, key, *v);
  if (c.lease_ttl_secs < 1) throw Error(ErrorKind::FormatError, "LEASE_TTL_SECS must be at least 1");
  if (c.max_attempts < 1) throw Error(ErrorKind::FormatError, "MAX_ATTEMPTS must be at least 1");
  return c;
}

std::pair<std::string, int> parse_listen_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorKind::FormatError, "listen address must be host:port");
  auto port = parse_number(addr.substr(colon + 1));
  if (!port || *port < 0 || *port > 65535 || *port != std::floor(*port))
    throw Error(ErrorKind::FormatError, "bad port in listen address '" + addr + "'");
  std::string host = addr.substr(0, colon);
  if (host.empty()) host = "0.0.0.0";
  return {host, static_cast<int>(*port)};
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownDataset:
    case ErrorKind::UnknownExperiment:
    case ErrorKind::UnknownWorker:
    case ErrorKind::UnknownJob: return 404;
    case ErrorKind::Conflict:
    case ErrorKind::NotCompleted: return 409;
    case ErrorKind::ParseError:
    case ErrorKind::TargetError:
    case ErrorKind::EmptyDataset:
    case ErrorKind::TaskMismatch:
    case ErrorKind::TooFewSamples:
    case ErrorKind::SingleClass:
    case ErrorKind::NotClassification:
    case ErrorKind::EmptyInput:
    case ErrorKind::NumericalFailure: return 422;
    case ErrorKind::IoError:
    case ErrorKind::InvariantViolation: return 500;
    default: return 400;
  }
}

// ---------------------------------------------------------------------------

namespace {

using Request = httplib::Request;
using Response = httplib::Response;
using Handler = std::function<void(const Request&, Response&)>;

void send_json(Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(Response& res, int status, std::string_view kind, const std::string& message) {
  send_json(res, status, {{"error", {{"kind", kind}, {"message", message}}}});
}

json body_of(const Request& req) {
  if (trim(req.body).empty()) return json::object();
  json j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorKind::Validation, "request body must be a JSON object");
  return j;
}

std::string param(const Request& req, const std::string& name, const std::string& fallback = "") {
  return req.has_param(name) ? req.get_param_value(name) : fallback;
}

std::size_t count_param(const Request& req, const std::string& name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  auto v = parse_number(req.get_param_value(name));
  if (!v || *v < 1 || *v != std::floor(*v)) throw Error(ErrorKind::Validation, name + " must be a positive integer");
  return static_cast<std::size_t>(*v);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> tags_of(const json& j) {
  if (j.is_null()) return {};
  if (j.is_string()) return split_list(j.get<std::string>());
  return j.get<std::vector<std::string>>();
}

ml::CvSpec cv_of(const json& body) {
  ml::CvSpec cv;
  if (body.contains("cv")) {
    const auto& c = body["cv"];
    if (c.is_number_integer()) cv.folds = c.get<std::size_t>();
    else if (c.is_object()) cv = c.get<ml::CvSpec>();
    else throw Error(ErrorKind::Validation, "cv must be a fold count or {folds, seed}");
  }
  if (body.contains("seed")) cv.seed = body["seed"].get<std::uint64_t>();
  return cv;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

Service::Service(ServiceConfig config, const Clock* clock) : config_(std::move(config)) {
  if (!clock) {
    owned_clock_ = std::make_unique<SystemClock>();
    clock = owned_clock_.get();
  }
  clock_ = clock;
  std::filesystem::create_directories(config_.data_dir);
  store_ = std::make_unique<ExperimentStore>(config_.data_dir);
  ControllerOptions copts;
  copts.lease_ttl_ms = config_.lease_ttl_secs * 1000;
  copts.max_attempts = config_.max_attempts;
  controller_ = std::make_unique<Controller>(*store_, *clock_, copts);
  notifier_ = std::make_unique<WebhookNotifier>(WebhookOptions{config_.webhook_url});
  ai_ = std::make_unique<AiEngine>(*store_, *controller_, recommender_, *clock_,
                                   [this](const NotificationEvent& e) { notifier_->send(e); });
  load_knowledge();
  server_ = std::make_unique<httplib::Server>();
  register_routes();
}

Service::~Service() { stop(); }

void Service::load_knowledge() {
  if (!config_.kb_path.empty()) {
    auto res = load_knowledge_base(config_.kb_path);
    for (const auto& e : res.errors)
      spdlog::warn("{}:{}: skipped knowledge-base row: {}", config_.kb_path.string(), e.line, e.message);
    recommender_.add_entries(res.kb.entries());
    spdlog::info("knowledge base: {} rows from {}", res.kb.size(), config_.kb_path.string());
  }
  const auto uploads = config_.data_dir / "kb";
  if (std::filesystem::exists(uploads)) {
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(uploads))
      if (f.path().extension() == ".tsv") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) recommender_.load_bootstrap(read_file(f));
  }
  if (!config_.rules_path.empty()) recommender_.set_rules(load_rules(config_.rules_path));
  recommender_.rebuild_live(*store_);
}

std::string Service::base_url() const {
  auto [host, _] = parse_listen_addr(config_.listen_addr);
  if (host == "0.0.0.0") host = "127.0.0.1";
  return "http://" + host + ":" + std::to_string(port_);
}

int Service::start() {
  auto [host, port] = parse_listen_addr(config_.listen_addr);
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    if (!server_->bind_to_port(host, port)) port_ = -1;
    else port_ = port;
  }
  if (port_ <= 0) throw Error(ErrorKind::IoError, "cannot listen on " + config_.listen_addr);
  server_thread_ = std::thread([this] { server_->listen_after_bind(); });
  reaper_thread_ = std::thread([this] { reaper_loop(); });
  if (config_.local_workers > 0) {
    WorkerPoolOptions opts;
    opts.workers = config_.local_workers;
    opts.poll_interval = std::chrono::milliseconds(100);
    pool_ = std::make_unique<WorkerPool>(std::make_shared<LocalTransport>(*controller_, *store_), opts);
    pool_->start();
  }
  spdlog::info("listening on {}", base_url());
  return port_;
}

void Service::wait() {
  std::unique_lock lock(stop_mutex_);
  stop_cv_.wait(lock, [&] { return stopped_; });
}

void Service::stop() {
  {
    std::lock_guard lock(stop_mutex_);
    if (stopped_) return;
    stopped_ = true;
  }
  stop_cv_.notify_all();
  if (pool_) pool_->stop();
  if (server_) server_->stop();
  if (server_thread_.joinable()) server_thread_.join();
  if (reaper_thread_.joinable()) reaper_thread_.join();
}

void Service::reaper_loop() {
  const auto period = std::chrono::milliseconds(std::clamp<std::int64_t>(config_.lease_ttl_secs * 250, 50, 1000));
  std::unique_lock lock(stop_mutex_);
  while (!stop_cv_.wait_for(lock, period, [&] { return stopped_; })) {
    lock.unlock();
    try {
      for (const auto& id : controller_->reap_expired_leases()) spdlog::warn("lease on {} expired", id);
    } catch (const std::exception& e) {
      spdlog::error("lease reaper: {}", e.what());
    }
    lock.lock();
  }
}

void Service::register_routes() {
  auto& srv = *server_;
  srv.set_pre_routing_handler([this](const Request& req, Response& res) {
    if (config_.api_token.empty() || req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
    if (req.get_header_value("Authorization") == "Bearer " + config_.api_token)
      return httplib::Server::HandlerResponse::Unhandled;
    send_error(res, 401, "Unauthorized", "missing or wrong bearer token");
    return httplib::Server::HandlerResponse::Handled;
  });

  // Error mapping plus replay of POSTs carrying an Idempotency-Key.
  auto wrap = [this](Handler h) {
    return [this, h](const Request& req, Response& res) {
      std::string key;
      if (req.method == "POST" && req.has_header("Idempotency-Key")) {
        key = req.path + "\n" + req.get_header_value("Idempotency-Key");
        std::lock_guard lock(replay_mutex_);
        auto it = replays_.find(key);
        if (it != replays_.end()) {
          res.status = it->second.status;
          res.set_content(it->second.body, it->second.content_type);
          return;
        }
      }
      try {
        h(req, res);
      } catch (const Error& e) {
        send_error(res, http_status(e.kind()), to_string(e.kind()), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "Validation", std::string("bad request field: ") + e.what());
      } catch (const std::exception& e) {
        spdlog::error("{} {} failed: {}", req.method, req.path, e.what());
        send_error(res, 500, "IoError", e.what());
      }
      if (!key.empty() && res.status < 500) {
        std::lock_guard lock(replay_mutex_);
        if (replays_.size() > 100'000) replays_.clear();
        replays_[key] = {res.status, res.body, res.get_header_value("Content-Type")};
      }
    };
  };
  auto dataset_labels = [this] {
    std::map<std::string, std::string> labels;
    std::map<std::string, int> uses;
    const auto all = store_->list_datasets();
    for (const auto& d : all) ++uses[d.name];
    for (const auto& d : all) labels[d.id] = uses[d.name] > 1 ? kb_dataset_name(d) : d.name;
    return labels;
  };
  auto now = [this] { return clock_->now_ms(); };

  srv.Get("/health", wrap([this](const Request&, Response& res) {
    auto c = controller_->counts();
    send_json(res, 200,
              {{"status", "ok"},
               {"jobs", {{"queued", c.queued}, {"leased", c.leased}, {"done", c.done}, {"failed", c.failed},
                         {"cancelled", c.cancelled}, {"total", c.total}}},
               {"experiments", store_->experiment_count()},
               {"kb_size", recommender_.snapshot().size()}});
  }));

  // Datasets -----------------------------------------------------------------
  srv.Post("/datasets", wrap([this, now](const Request& req, Response& res) {
    std::string csv, name, target, task;
    std::vector<std::string> tags;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("file")) throw Error(ErrorKind::Validation, "multipart upload needs a 'file' part");
      const auto file = req.get_file_value("file");
      csv = file.content;
      auto field = [&](const char* n) { return req.has_file(n) ? req.get_file_value(n).content : std::string(); };
      name = field("name");
      if (name.empty()) name = std::filesystem::path(file.filename).stem().string();
      target = field("target");
      task = field("task");
      tags = split_list(field("tags"));
    } else {
      const auto body = body_of(req);
      csv = body.at("csv").get<std::string>();
      name = body.value("name", "");
      target = body.value("target", "");
      task = body.value("task", "");
      tags = tags_of(body.value("tags", json()));
    }
    if (name.empty()) name = "dataset";
    if (target.empty()) throw Error(ErrorKind::Validation, "target column is required");
    if (task.empty()) throw Error(ErrorKind::Validation, "task is required (classification or regression)");
    auto r = ingest_dataset(*store_, csv, name, target, parse_task_type(task), tags, now());
    send_json(res, r.created ? 201 : 200, {{"dataset", r.record}, {"created", r.created}});
  }));
  srv.Get("/datasets", wrap([this](const Request&, Response& res) { send_json(res, 200, store_->list_datasets()); }));
  srv.Get("/datasets/:id", wrap([this](const Request& req, Response& res) {
    send_json(res, 200, store_->require_dataset(req.path_params.at("id")));
  }));
  srv.Get("/datasets/:id/data", wrap([this](const Request& req, Response& res) {
    res.set_content(store_->dataset_bytes(req.path_params.at("id")), "text/csv");
  }));

  srv.Get("/algorithms", wrap([](const Request& req, Response& res) {
    json out = json::array();
    for (auto task : {TaskType::Classification, TaskType::Regression}) {
      if (req.has_param("task") && parse_task_type(req.get_param_value("task")) != task) continue;
      for (const auto& spec : ml::list_algorithms(task)) out.push_back(spec);
    }
    send_json(res, 200, out);
  }));

  // Experiments --------------------------------------------------------------
  srv.Post("/experiments", wrap([this](const Request& req, Response& res) {
    const auto body = body_of(req);
    const auto dataset = store_->require_dataset(body.at("dataset_id").get<std::string>());
    const auto cv = cv_of(body);
    std::vector<ml::ParamConfig> configs;
    const std::string algorithm = body.value("algorithm", "");
    if (body.value("grid", false)) {
      configs = algorithm.empty() ? ml::full_grid(dataset.task_type)
                                  : ml::default_grid(ml::find_algorithm(dataset.task_type, algorithm));
    } else {
      if (algorithm.empty()) throw Error(ErrorKind::Validation, "algorithm is required unless grid is true");
      ml::ParamConfig cfg{algorithm, {}};
      if (body.contains("parameters") && !body["parameters"].is_null())
        cfg.values = body["parameters"].get<std::map<std::string, json>>();
      configs.push_back(std::move(cfg));
    }
    json submitted = json::array();
    for (const auto& cfg : configs) {
      auto r = controller_->submit({dataset.id, cfg, cv, LaunchedBy::User});
      submitted.push_back({{"experiment_id", r.experiment_id}, {"job_id", r.job_id}, {"duplicate", r.duplicate}});
    }
    send_json(res, 202, {{"submitted", submitted}});
  }));
  srv.Get("/experiments", wrap([this](const Request& req, Response& res) {
    ExperimentFilter filter;
    for (const auto& [k, v] : req.params) filter.emplace_back(k, v);
    send_json(res, 200, store_->query_experiments(filter));
  }));
  srv.Get("/experiments/:id", wrap([this](const Request& req, Response& res) {
    send_json(res, 200, store_->require_experiment(req.path_params.at("id")));
  }));
  srv.Get("/experiments/:id/artifacts", wrap([this](const Request& req, Response& res) {
    const auto& id = req.path_params.at("id");
    store_->require_experiment(id);
    send_json(res, 200, store_->artifacts_of(id));
  }));
  srv.Post("/experiments/:id/feedback", wrap([this, now](const Request& req, Response& res) {
    const auto body = body_of(req);
    const Vote vote = parse_vote(body.at("vote").get<std::string>());
    if (vote == Vote::None) throw Error(ErrorKind::Validation, "vote must be up or down");
    const auto entry = recommender_.apply_feedback(*store_, req.path_params.at("id"), vote, now());
    send_json(res, 200, {{"experiment", store_->require_experiment(req.path_params.at("id"))}, {"kb_entry", entry}});
  }));
  srv.Get("/experiments/:id/roc", wrap([this](const Request& req, Response& res) {
    const auto& id = req.path_params.at("id");
    const auto ex = export_roc(*store_, id, config_.data_dir / "reports");
    const std::string format = param(req, "format", "json");
    if (format == "csv") {
      res.set_content(store_->get_artifact(ex.csv_sha), "text/csv");
    } else if (format == "svg") {
      res.set_content(store_->get_artifact(ex.svg_sha), "image/svg+xml");
    } else if (format == "json") {
      const auto curve = experiment_roc(*store_, id);
      send_json(res, 200, {{"experiment_id", id}, {"roc", curve}, {"artifacts", {{"roc_csv", ex.csv_sha}, {"roc_svg", ex.svg_sha}}}});
    } else {
      throw Error(ErrorKind::Validation, "format must be json, csv or svg");
    }
  }));
  srv.Get("/artifacts/:sha", wrap([this](const Request& req, Response& res) {
    const auto& sha = req.path_params.at("sha");
    if (!store_->has_artifact(sha)) {
      send_error(res, 404, "UnknownExperiment", "no artifact " + sha);
      return;
    }
    res.set_content(store_->get_artifact(sha), "application/octet-stream");
  }));

  // AI -----------------------------------------------------------------------
  srv.Post("/ai/sessions", wrap([this](const Request& req, Response& res) {
    const auto body = body_of(req);
    AiSessionRequest r;
    r.dataset_id = body.at("dataset_id").get<std::string>();
    r.max_runs = body.value("max_runs", r.max_runs);
    r.update_every = body.value("update_every", r.update_every);
    r.epsilon = body.value("epsilon", r.epsilon);
    r.seed = body.value("seed", r.seed);
    r.enabled = body.value("enabled", r.enabled);
    r.cv = cv_of(body);
    send_json(res, 201, ai_->create_session(r));
  }));
  srv.Get("/ai/sessions", wrap([this](const Request&, Response& res) { send_json(res, 200, ai_->sessions()); }));
  srv.Get("/ai/sessions/:id", wrap([this](const Request& req, Response& res) {
    auto s = ai_->get_session(req.path_params.at("id"));
    if (!s) throw Error(ErrorKind::Validation, "unknown AI session '" + req.path_params.at("id") + "'");
    send_json(res, 200, *s);
  }));
  srv.Post("/ai/sessions/:id/toggle", wrap([this](const Request& req, Response& res) {
    const auto body = body_of(req);
    send_json(res, 200, ai_->toggle(req.path_params.at("id"), body.at("enabled").get<bool>()));
  }));

  // Recommendations, queries, reports -------------------------------------------
  srv.Get("/recommendations", wrap([this](const Request& req, Response& res) {
    const auto dataset = store_->require_dataset(param(req, "dataset_id"));
    const auto n = count_param(req, "n", 5);
    send_json(res, 200,
              {{"dataset_id", dataset.id},
               {"recommendations", recommender_.recommend_for(dataset, history_for(*store_, dataset.id), n)}});
  }));
  srv.Get("/best", wrap([this](const Request& req, Response& res) {
    SemanticQuery q;
    for (const auto& t : split_list(param(req, "tags"))) q.tags_any.insert(t);
    q.metric = param(req, "metric", q.metric);
    if (req.has_param("limit")) q.limit = count_param(req, "limit", 1);
    const auto order = param(req, "order");
    if (order == "desc") q.descending = true;
    else if (order == "asc") q.descending = false;
    else if (!order.empty()) throw Error(ErrorKind::Validation, "order must be asc or desc");
    send_json(res, 200, {{"tags_any", q.tags_any}, {"metric", q.metric}, {"results", store_->semantic_best_configs(q)}});
  }));
  srv.Get("/reports/heatmap", wrap([this, dataset_labels](const Request& req, Response& res) {
    const auto m = build_heatmap(store_->query_experiments({{"status", "completed"}}),
                                 param(req, "metric", "balanced_accuracy"), dataset_labels());
    if (param(req, "format") == "svg") res.set_content(heatmap_svg(m), "image/svg+xml");
    else send_json(res, 200, m);
  }));
  srv.Get("/reports/compare", wrap([this](const Request& req, Response& res) {
    send_json(res, 200, compare_algorithms(store_->query_experiments({{"status", "completed"}}),
                                           param(req, "metric", "balanced_accuracy")));
  }));
  srv.Get("/export/table", wrap([this, dataset_labels](const Request&, Response& res) {
    res.set_content(format_results_table(store_->query_experiments(), dataset_labels()), "text/tab-separated-values");
  }));

  // Knowledge base -------------------------------------------------------------
  srv.Post("/kb", wrap([this](const Request& req, Response& res) {
    std::string text = req.body;
    if (req.is_multipart_form_data()) {
      if (!req.has_file("file")) throw Error(ErrorKind::Validation, "multipart upload needs a 'file' part");
      text = req.get_file_value("file").content;
    }
    auto parsed = parse_knowledge_base(text);  // header errors reject the whole upload
    json errors = json::array();
    for (const auto& e : parsed.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
    const auto sha = sha256_hex(text);
    bool duplicate = false;
    {
      std::lock_guard lock(kb_mutex_);
      const auto dir = config_.data_dir / "kb";
      std::filesystem::create_directories(dir);
      for (const auto& f : std::filesystem::directory_iterator(dir))
        if (f.path().stem().string().ends_with(sha.substr(0, 16))) duplicate = true;
      if (!duplicate) {
        std::size_t n = 0;
        for ([[maybe_unused]] const auto& f : std::filesystem::directory_iterator(dir)) ++n;
        char prefix[16];
        std::snprintf(prefix, sizeof prefix, "%06zu-", n);
        std::ofstream out(dir / (prefix + sha.substr(0, 16) + ".tsv"), std::ios::binary);
        out << text;
        if (!out) throw Error(ErrorKind::IoError, "cannot persist knowledge-base upload");
        recommender_.add_entries(parsed.kb.entries());
      }
    }
    send_json(res, duplicate ? 200 : 201,
              {{"loaded", parsed.kb.size()}, {"errors", errors}, {"duplicate", duplicate},
               {"kb_size", recommender_.snapshot().size()}});
  }));
  srv.Get("/kb", wrap([this](const Request&, Response& res) {
    const auto kb = recommender_.snapshot();
    std::size_t live = 0;
    for (const auto& e : kb.entries()) live += e.source == KbSource::Live;
    send_json(res, 200, {{"size", kb.size()}, {"bootstrap", kb.size() - live}, {"live", live},
                         {"rules", recommender_.rules()}});
  }));

  // Worker protocol ------------------------------------------------------------
  srv.Post("/workers", wrap([this](const Request& req, Response& res) {
    const auto body = body_of(req);
    const auto id = controller_->register_worker(body.value("worker_id", ""), body.value("capacity", std::size_t{1}));
    send_json(res, 200, {{"worker_id", id}});
  }));
  srv.Get("/workers", wrap([this](const Request&, Response& res) { send_json(res, 200, controller_->workers()); }));
  srv.Post("/workers/:id/heartbeat", wrap([this](const Request& req, Response& res) {
    controller_->heartbeat(req.path_params.at("id"));
    send_json(res, 200, {{"ok", true}});
  }));
  srv.Post("/workers/:id/next", wrap([this](const Request& req, Response& res) {
    auto job = controller_->next_job(req.path_params.at("id"));
    if (!job) {
      res.status = 204;
      return;
    }
    send_json(res, 200, *job);
  }));
  srv.Post("/jobs/:id/complete", wrap([this](const Request& req, Response& res) {
    const auto body = body_of(req);
    const bool applied = controller_->complete_job(req.path_params.at("id"), body.at("worker_id").get<std::string>(),
                                                   body.at("outcome").get<JobOutcome>());
    send_json(res, 200, {{"applied", applied}});
  }));
  srv.Get("/jobs", wrap([this](const Request&, Response& res) { send_json(res, 200, controller_->jobs()); }));
  srv.Get("/jobs/:id", wrap([this](const Request& req, Response& res) {
    auto job = controller_->get_job(req.path_params.at("id"));
    if (!job) throw Error(ErrorKind::UnknownJob, "unknown job '" + req.path_params.at("id") + "'");
    send_json(res, 200, *job);
  }));
}

}  // namespace autolab
