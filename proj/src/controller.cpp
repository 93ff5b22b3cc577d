#include "autolab/controller.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>

namespace autolab {

using nlohmann::json;

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::Queued: return "queued";
    case JobState::Leased: return "leased";
    case JobState::Done: return "done";
    case JobState::Failed: return "failed";
    case JobState::Cancelled: return "cancelled";
  }
  return "queued";
}

JobState parse_job_state(std::string_view text) {
  for (auto s : {JobState::Queued, JobState::Leased, JobState::Done, JobState::Failed, JobState::Cancelled})
    if (to_string(s) == text) return s;
  throw Error(ErrorKind::Validation, "unknown job state '" + std::string(text) + "'");
}

void to_json(json& j, const Job& job) {
  j = json{{"job_id", job.job_id},
           {"experiment_id", job.experiment_id},
           {"payload",
            {{"dataset_id", job.payload.dataset_id},
             {"config", job.payload.config},
             {"cv", job.payload.cv},
             {"seed", job.payload.cv.seed}}},
           {"state", to_string(job.state)},
           {"attempts", job.attempts},
           {"lease", job.lease ? json{{"worker_id", job.lease->worker_id}, {"deadline", job.lease->deadline}}
                               : json(nullptr)},
           {"priority", to_string(job.priority)},
           {"sequence", job.sequence}};
}

void from_json(const json& j, Job& job) {
  job.job_id = j.at("job_id").get<std::string>();
  job.experiment_id = j.at("experiment_id").get<std::string>();
  const auto& p = j.at("payload");
  job.payload.dataset_id = p.at("dataset_id").get<std::string>();
  job.payload.config = p.at("config").get<ml::ParamConfig>();
  job.payload.cv = p.at("cv").get<ml::CvSpec>();
  job.state = parse_job_state(j.at("state").get<std::string>());
  job.attempts = j.at("attempts").get<std::size_t>();
  job.lease.reset();
  if (j.contains("lease") && !j["lease"].is_null())
    job.lease = Lease{j["lease"].at("worker_id").get<std::string>(), j["lease"].at("deadline").get<TimestampMs>()};
  job.priority = parse_launched_by(j.value("priority", "user"));
  job.sequence = j.value("sequence", std::uint64_t{0});
}

void to_json(json& j, const WorkerInfo& w) {
  j = json{{"worker_id", w.worker_id}, {"capacity", w.capacity}, {"last_heartbeat", w.last_heartbeat}};
}

void to_json(json& j, const JobOutcome& o) {
  j = json::object();
  if (o.result) j["result"] = *o.result;
  if (!o.model_artifact.empty()) j["model_artifact"] = base64_encode(o.model_artifact);
  if (o.error) j["error"] = *o.error;
}

void from_json(const json& j, JobOutcome& o) {
  o = {};
  if (j.contains("result") && !j["result"].is_null()) o.result = j["result"].get<ml::EvaluationResult>();
  if (j.contains("model_artifact") && !j["model_artifact"].is_null())
    o.model_artifact = base64_decode(j["model_artifact"].get<std::string>());
  if (j.contains("error") && !j["error"].is_null()) o.error = j["error"].get<std::string>();
  if (o.result.has_value() == o.error.has_value())
    throw Error(ErrorKind::Validation, "outcome needs exactly one of result or error");
}

// ---------------------------------------------------------------------------

Controller::Controller(ExperimentStore& store, const Clock& clock, ControllerOptions options)
    : store_(store), clock_(clock), options_(options) {
  if (options_.max_attempts < 1) throw Error(ErrorKind::Validation, "max_attempts must be at least 1");
  if (options_.lease_ttl_ms < 1) throw Error(ErrorKind::Validation, "lease ttl must be positive");
  recover();
}

namespace {

std::string job_id_for(const std::string& experiment_id) { return "job-" + experiment_id.substr(4); }

int priority_class(LaunchedBy by) { return by == LaunchedBy::User ? 0 : 1; }

}  // namespace

void Controller::recover() {
  // Experiments left pending or running by a previous process are queued
  // again in creation order.
  auto pending = store_.query_experiments({{"status", "pending"}});
  auto running = store_.query_experiments({{"status", "running"}});
  pending.insert(pending.end(), running.begin(), running.end());
  std::sort(pending.begin(), pending.end(),
            [](const auto& a, const auto& b) { return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id); });
  for (auto& rec : pending) {
    if (rec.status == ExperimentStatus::Running) {
      rec.status = ExperimentStatus::Pending;
      store_.update_experiment(rec);
    }
    Job job;
    job.job_id = job_id_for(rec.id);
    job.experiment_id = rec.id;
    job.payload = {rec.dataset_id, rec.config(), rec.cv};
    job.priority = rec.launched_by;
    job.sequence = next_sequence_++;
    auto& stored = jobs_[job.job_id] = job;
    enqueue(stored);
  }
}

void Controller::enqueue(Job& job) {
  job.state = JobState::Queued;
  job.lease.reset();
  queue_[{priority_class(job.priority), job.sequence}] = job.job_id;
}

SubmitResult Controller::submit(const SubmitRequest& request) {
  const auto dataset = store_.require_dataset(request.dataset_id);
  const auto config = ml::validate_config(dataset.task_type, request.config);
  if (request.cv.folds < 2) throw Error(ErrorKind::InvalidConfig, "cross-validation needs at least 2 folds");
  const std::string exp_id = experiment_id_for(dataset.id, config, request.cv);
  const std::string job_id = job_id_for(exp_id);

  std::unique_lock lock(mutex_);
  if (auto existing = store_.get_experiment(exp_id)) {
    if (existing->status != ExperimentStatus::Failed) return {job_id, exp_id, true};
    // A failed experiment may be retried: same experiment, same job id.
    existing->status = ExperimentStatus::Pending;
    existing->error.reset();
    existing->finished_at.reset();
    store_.update_experiment(*existing);
    Job& job = jobs_[job_id];
    job.job_id = job_id;
    job.experiment_id = exp_id;
    job.payload = {dataset.id, config, request.cv};
    job.priority = existing->launched_by;
    job.attempts = 0;
    job.sequence = next_sequence_++;
    enqueue(job);
    changed_.notify_all();
    return {job_id, exp_id, false};
  }

  ExperimentRecord rec;
  rec.id = exp_id;
  rec.dataset_id = dataset.id;
  rec.task = dataset.task_type;
  rec.algorithm = config.algorithm;
  rec.parameters = config.values;
  rec.cv = request.cv;
  rec.launched_by = request.launched_by;
  rec.index_terms = make_index_terms(dataset, config.algorithm);
  rec.created_at = clock_.now_ms();
  store_.put_experiment(rec);

  Job job;
  job.job_id = job_id;
  job.experiment_id = exp_id;
  job.payload = {dataset.id, config, request.cv};
  job.priority = request.launched_by;
  job.sequence = next_sequence_++;
  enqueue(jobs_[job_id] = job);
  changed_.notify_all();
  return {job_id, exp_id, false};
}

std::string Controller::register_worker(const std::string& worker_id, std::size_t capacity) {
  if (capacity < 1) throw Error(ErrorKind::Validation, "worker capacity must be at least 1");
  std::unique_lock lock(mutex_);
  std::string id = worker_id;
  if (id.empty()) {
    do id = "worker-" + std::to_string(next_worker_++);
    while (workers_.count(id));
  }
  auto& w = workers_[id];
  w.worker_id = id;
  w.capacity = capacity;
  w.last_heartbeat = clock_.now_ms();
  return id;
}

void Controller::heartbeat(const std::string& worker_id) {
  std::unique_lock lock(mutex_);
  auto it = workers_.find(worker_id);
  if (it == workers_.end()) throw Error(ErrorKind::UnknownWorker, "unknown worker '" + worker_id + "'");
  const TimestampMs now = clock_.now_ms();
  it->second.last_heartbeat = now;
  for (auto& [id, job] : jobs_)
    if (job.state == JobState::Leased && job.lease->worker_id == worker_id)
      job.lease->deadline = now + options_.lease_ttl_ms;
}

void Controller::set_experiment_status(const std::string& experiment_id, ExperimentStatus status) {
  auto rec = store_.require_experiment(experiment_id);
  if (rec.status == status) return;
  rec.status = status;
  store_.update_experiment(rec);
}

std::optional<Job> Controller::next_job(const std::string& worker_id) {
  std::unique_lock lock(mutex_);
  auto w = workers_.find(worker_id);
  if (w == workers_.end()) throw Error(ErrorKind::UnknownWorker, "unknown worker '" + worker_id + "'");
  const TimestampMs now = clock_.now_ms();
  w->second.last_heartbeat = now;
  std::size_t held = 0;
  for (const auto& [id, job] : jobs_)
    if (job.state == JobState::Leased && job.lease->worker_id == worker_id) ++held;
  if (held >= w->second.capacity || queue_.empty()) return std::nullopt;

  auto head = queue_.begin();
  Job& job = jobs_.at(head->second);
  queue_.erase(head);
  job.state = JobState::Leased;
  job.attempts += 1;
  job.lease = Lease{worker_id, now + options_.lease_ttl_ms};
  set_experiment_status(job.experiment_id, ExperimentStatus::Running);
  return job;
}

void Controller::finish(Job& job, JobState state, std::vector<ExperimentRecord>& events, const JobOutcome* outcome,
                        const std::string& error) {
  job.state = state;
  job.lease.reset();
  auto rec = store_.require_experiment(job.experiment_id);
  if (rec.status == ExperimentStatus::Completed) return;  // result already deposited
  rec.finished_at = clock_.now_ms();
  if (state == JobState::Done) {
    rec.status = ExperimentStatus::Completed;
    rec.result = *outcome->result;
    rec.error.reset();
    if (!outcome->model_artifact.empty()) rec.model_artifact = store_.put_artifact(outcome->model_artifact);
  } else {
    rec.status = ExperimentStatus::Failed;
    rec.error = error;
  }
  store_.update_experiment(rec);
  events.push_back(rec);
}

bool Controller::complete_job(const std::string& job_id, const std::string& worker_id, const JobOutcome& outcome) {
  std::vector<ExperimentRecord> events;
  {
    std::unique_lock lock(mutex_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw Error(ErrorKind::UnknownJob, "unknown job '" + job_id + "'");
    Job& job = it->second;
    if (job.state != JobState::Leased || job.lease->worker_id != worker_id) return false;
    if (outcome.result) {
      finish(job, JobState::Done, events, &outcome, "");
    } else {
      finish(job, JobState::Failed, events, nullptr, outcome.error.value_or("worker reported no result"));
    }
    changed_.notify_all();
  }
  notify(events);
  return true;
}

std::vector<std::string> Controller::reap_expired_leases(TimestampMs now) {
  std::vector<std::string> requeued;
  std::vector<ExperimentRecord> events;
  {
    std::unique_lock lock(mutex_);
    for (auto& [id, job] : jobs_) {
      if (job.state != JobState::Leased || job.lease->deadline >= now) continue;
      if (job.attempts < options_.max_attempts) {
        enqueue(job);
        set_experiment_status(job.experiment_id, ExperimentStatus::Pending);
        requeued.push_back(id);
      } else {
        finish(job, JobState::Failed, events, nullptr,
               "lease expired " + std::to_string(job.attempts) + " times; giving up");
      }
    }
    if (!requeued.empty() || !events.empty()) changed_.notify_all();
  }
  notify(events);
  return requeued;
}

bool Controller::cancel(const std::string& job_id) {
  std::vector<ExperimentRecord> events;
  {
    std::unique_lock lock(mutex_);
    auto it = jobs_.find(job_id);
    if (it == jobs_.end()) throw Error(ErrorKind::UnknownJob, "unknown job '" + job_id + "'");
    Job& job = it->second;
    if (job.state != JobState::Queued && job.state != JobState::Leased) return false;
    if (job.state == JobState::Queued) queue_.erase({priority_class(job.priority), job.sequence});
    finish(job, JobState::Cancelled, events, nullptr, "cancelled");
    changed_.notify_all();
  }
  notify(events);
  return true;
}

std::optional<Job> Controller::get_job(const std::string& job_id) const {
  std::unique_lock lock(mutex_);
  auto it = jobs_.find(job_id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second;
}

std::vector<Job> Controller::jobs() const {
  std::unique_lock lock(mutex_);
  std::vector<Job> out;
  for (const auto& [id, job] : jobs_) out.push_back(job);
  std::sort(out.begin(), out.end(), [](const Job& a, const Job& b) { return a.sequence < b.sequence; });
  return out;
}

std::vector<WorkerInfo> Controller::workers() const {
  std::unique_lock lock(mutex_);
  std::vector<WorkerInfo> out;
  for (const auto& [id, w] : workers_) out.push_back(w);
  return out;
}

JobCounts Controller::counts() const {
  std::unique_lock lock(mutex_);
  JobCounts c;
  for (const auto& [id, job] : jobs_) {
    switch (job.state) {
      case JobState::Queued: ++c.queued; break;
      case JobState::Leased: ++c.leased; break;
      case JobState::Done: ++c.done; break;
      case JobState::Failed: ++c.failed; break;
      case JobState::Cancelled: ++c.cancelled; break;
    }
  }
  c.total = jobs_.size();
  return c;
}

void Controller::add_completion_listener(CompletionListener listener) {
  std::lock_guard lock(listeners_mutex_);
  listeners_.push_back(std::move(listener));
}

void Controller::notify(const std::vector<ExperimentRecord>& events) {
  if (events.empty()) return;
  std::vector<CompletionListener> listeners;
  {
    std::lock_guard lock(listeners_mutex_);
    listeners = listeners_;
  }
  for (const auto& rec : events)
    for (const auto& l : listeners) {
      try {
        l(rec);
      } catch (const std::exception& e) {
        spdlog::warn("completion listener failed for {}: {}", rec.id, e.what());
      }
    }
}

bool Controller::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return changed_.wait_for(lock, timeout, [&] {
    return std::none_of(jobs_.begin(), jobs_.end(), [](const auto& kv) {
      return kv.second.state == JobState::Queued || kv.second.state == JobState::Leased;
    });
  });
}

// ---------------------------------------------------------------------------
// Workers

JobOutcome execute_job(const Job& job, const DatasetRecord& dataset, const std::string& canonical_csv) {
  JobOutcome outcome;
  try {
    const Table table = load_table(canonical_csv, dataset);
    auto out = ml::train_evaluate(table, dataset, job.payload.config, job.payload.cv);
    outcome.result = std::move(out.result);
    outcome.model_artifact = std::move(out.model_artifact);
  } catch (const Error& e) {
    outcome.error = std::string(to_string(e.kind())) + ": " + e.what();
  } catch (const std::exception& e) {
    outcome.error = e.what();
  }
  return outcome;
}

std::string LocalTransport::register_worker(const std::string& worker_id, std::size_t capacity) {
  return controller_.register_worker(worker_id, capacity);
}

void LocalTransport::heartbeat(const std::string& worker_id) { controller_.heartbeat(worker_id); }

std::optional<Job> LocalTransport::next_job(const std::string& worker_id) { return controller_.next_job(worker_id); }

void LocalTransport::complete_job(const std::string& job_id, const std::string& worker_id, const JobOutcome& outcome) {
  controller_.complete_job(job_id, worker_id, outcome);
}

std::pair<DatasetRecord, std::string> LocalTransport::fetch_dataset(const std::string& dataset_id) {
  auto rec = store_.require_dataset(dataset_id);
  return {rec, store_.dataset_bytes(dataset_id)};
}

WorkerPool::WorkerPool(std::shared_ptr<WorkerTransport> transport, WorkerPoolOptions options)
    : transport_(std::move(transport)), options_(std::move(options)) {}

WorkerPool::~WorkerPool() { stop(); }

void WorkerPool::start() {
  stopping_ = false;
  for (std::size_t i = 0; i < options_.workers; ++i) threads_.emplace_back([this, i] { run(i); });
}

void WorkerPool::stop() {
  stopping_ = true;
  wake_.notify_all();
  for (auto& t : threads_)
    if (t.joinable()) t.join();
  threads_.clear();
}

void WorkerPool::run(std::size_t index) {
  const std::string requested = options_.name_prefix + "-" + std::to_string(index + 1);
  std::string id;
  auto sleep_for = [&](std::chrono::milliseconds d) {
    std::unique_lock lock(sleep_mutex_);
    wake_.wait_for(lock, d, [&] { return stopping_.load(); });
  };
  auto last_beat = std::chrono::steady_clock::now();
  while (!stopping_) {
    try {
      if (id.empty()) id = transport_->register_worker(requested, 1);
      if (std::chrono::steady_clock::now() - last_beat >= options_.heartbeat_interval) {
        transport_->heartbeat(id);
        last_beat = std::chrono::steady_clock::now();
      }
      auto job = transport_->next_job(id);
      if (!job) {
        sleep_for(options_.poll_interval);
        continue;
      }
      // Keep the lease alive while a long fit runs.
      std::atomic<bool> running{true};
      std::thread beat([&] {
        while (running) {
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
          if (std::chrono::steady_clock::now() - last_beat >= options_.heartbeat_interval) {
            try {
              transport_->heartbeat(id);
            } catch (const std::exception& e) {
              spdlog::warn("worker {} heartbeat failed: {}", id, e.what());
            }
            last_beat = std::chrono::steady_clock::now();
          }
        }
      });
      JobOutcome outcome;
      try {
        auto [dataset, bytes] = transport_->fetch_dataset(job->payload.dataset_id);
        outcome = execute_job(*job, dataset, bytes);
      } catch (const std::exception& e) {
        outcome.error = std::string("dataset fetch failed: ") + e.what();
      }
      running = false;
      beat.join();
      transport_->complete_job(job->job_id, id, outcome);
      ++completed_;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::UnknownWorker) id.clear();  // controller restarted; register again
      spdlog::warn("worker {}: {}", requested, e.what());
      sleep_for(options_.poll_interval);
    } catch (const std::exception& e) {
      spdlog::warn("worker {}: {}", requested, e.what());
      sleep_for(options_.poll_interval);
    }
  }
}

}  // namespace autolab
