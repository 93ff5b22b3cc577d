#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "autolab/store.hpp"

namespace autolab {

enum class JobState { Queued, Leased, Done, Failed, Cancelled };

std::string_view to_string(JobState s);
JobState parse_job_state(std::string_view text);

struct Lease {
  std::string worker_id;
  TimestampMs deadline = 0;

  bool operator==(const Lease&) const = default;
};

struct JobPayload {
  std::string dataset_id;
  ml::ParamConfig config;
  ml::CvSpec cv;

  bool operator==(const JobPayload&) const = default;
};

struct Job {
  std::string job_id;
  std::string experiment_id;
  JobPayload payload;
  JobState state = JobState::Queued;
  std::size_t attempts = 0;
  std::optional<Lease> lease;
  LaunchedBy priority = LaunchedBy::User;
  /// Submission order; FIFO key within a priority class.
  std::uint64_t sequence = 0;

  bool operator==(const Job&) const = default;
};

void to_json(nlohmann::json& j, const Job& job);
void from_json(const nlohmann::json& j, Job& job);

struct WorkerInfo {
  std::string worker_id;
  std::size_t capacity = 1;
  TimestampMs last_heartbeat = 0;
};

void to_json(nlohmann::json& j, const WorkerInfo& w);

struct SubmitRequest {
  std::string dataset_id;
  ml::ParamConfig config;
  ml::CvSpec cv;
  LaunchedBy launched_by = LaunchedBy::User;
};

struct SubmitResult {
  std::string job_id;
  std::string experiment_id;
  /// True when the same (dataset, config, cv) was already submitted; no new
  /// job was created.
  bool duplicate = false;
};

/// What a worker reports back: a result (and optionally the fitted model
/// bytes) or an error message.
struct JobOutcome {
  std::optional<ml::EvaluationResult> result;
  std::string model_artifact;
  std::optional<std::string> error;
};

void to_json(nlohmann::json& j, const JobOutcome& o);
void from_json(const nlohmann::json& j, JobOutcome& o);

struct JobCounts {
  std::size_t queued = 0, leased = 0, done = 0, failed = 0, cancelled = 0;
  std::size_t total = 0;

  std::size_t sum() const { return queued + leased + done + failed + cancelled; }
};

struct ControllerOptions {
  TimestampMs lease_ttl_ms = 300'000;
  std::size_t max_attempts = 3;
};

/// Queues jobs, leases them to pulling workers, and deposits each result into
/// the store at most once. Every state change happens under one mutex, so the
/// sequence of decisions is totally ordered.
class Controller {
 public:
  using CompletionListener = std::function<void(const ExperimentRecord&)>;

  Controller(ExperimentStore& store, const Clock& clock, ControllerOptions options = {});

  /// Throws UnknownDataset, UnknownAlgorithm, TaskMismatch, UnknownParam, InvalidConfig.
  SubmitResult submit(const SubmitRequest& request);

  /// Idempotent: re-registering an id keeps it (and updates capacity). An
  /// empty id asks the controller to assign one.
  std::string register_worker(const std::string& worker_id = "", std::size_t capacity = 1);
  /// Refreshes last_heartbeat and extends the worker's leases. Throws UnknownWorker.
  void heartbeat(const std::string& worker_id);
  /// Leases the highest-priority, oldest queued job. Throws UnknownWorker.
  std::optional<Job> next_job(const std::string& worker_id);
  /// Applies the outcome when the job is leased to this worker; otherwise a
  /// no-op. Returns whether it was applied. Throws UnknownJob.
  bool complete_job(const std::string& job_id, const std::string& worker_id, const JobOutcome& outcome);
  /// Requeues (or fails, after max_attempts) every lease whose deadline < now.
  std::vector<std::string> reap_expired_leases(TimestampMs now);
  std::vector<std::string> reap_expired_leases() { return reap_expired_leases(clock_.now_ms()); }
  /// Cancels a queued or leased job. Returns false when it was already terminal.
  bool cancel(const std::string& job_id);

  std::optional<Job> get_job(const std::string& job_id) const;
  std::vector<Job> jobs() const;
  std::vector<WorkerInfo> workers() const;
  JobCounts counts() const;
  ControllerOptions options() const { return options_; }

  /// Called (outside the controller lock) once per experiment that reaches
  /// completed or failed.
  void add_completion_listener(CompletionListener listener);

  /// Blocks until no job is queued or leased, or the timeout elapses.
  bool wait_idle(std::chrono::milliseconds timeout) const;

 private:
  struct QueueKey {
    int priority_class;
    std::uint64_t sequence;
    auto operator<=>(const QueueKey&) const = default;
  };

  void enqueue(Job& job);
  void finish(Job& job, JobState state, std::vector<ExperimentRecord>& events, const JobOutcome* outcome,
              const std::string& error);
  void set_experiment_status(const std::string& experiment_id, ExperimentStatus status);
  void recover();
  void notify(const std::vector<ExperimentRecord>& events);

  ExperimentStore& store_;
  const Clock& clock_;
  ControllerOptions options_;

  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  std::map<std::string, Job> jobs_;
  std::map<QueueKey, std::string> queue_;
  std::map<std::string, WorkerInfo> workers_;
  std::uint64_t next_sequence_ = 0;
  std::uint64_t next_worker_ = 1;

  std::mutex listeners_mutex_;
  std::vector<CompletionListener> listeners_;
};

/// Fetches datasets and trains one job. Training errors become error outcomes.
JobOutcome execute_job(const Job& job, const DatasetRecord& dataset, const std::string& canonical_csv);

/// The four worker-protocol calls plus dataset download, over any medium.
class WorkerTransport {
 public:
  virtual ~WorkerTransport() = default;
  virtual std::string register_worker(const std::string& worker_id, std::size_t capacity) = 0;
  virtual void heartbeat(const std::string& worker_id) = 0;
  virtual std::optional<Job> next_job(const std::string& worker_id) = 0;
  virtual void complete_job(const std::string& job_id, const std::string& worker_id, const JobOutcome& outcome) = 0;
  virtual std::pair<DatasetRecord, std::string> fetch_dataset(const std::string& dataset_id) = 0;
};

/// Direct calls into an in-process controller and store.
class LocalTransport final : public WorkerTransport {
 public:
  LocalTransport(Controller& controller, ExperimentStore& store) : controller_(controller), store_(store) {}
  std::string register_worker(const std::string& worker_id, std::size_t capacity) override;
  void heartbeat(const std::string& worker_id) override;
  std::optional<Job> next_job(const std::string& worker_id) override;
  void complete_job(const std::string& job_id, const std::string& worker_id, const JobOutcome& outcome) override;
  std::pair<DatasetRecord, std::string> fetch_dataset(const std::string& dataset_id) override;

 private:
  Controller& controller_;
  ExperimentStore& store_;
};

struct WorkerPoolOptions {
  std::size_t workers = 1;
  std::chrono::milliseconds poll_interval{200};
  std::chrono::milliseconds heartbeat_interval{30'000};
  std::string name_prefix = "local";
};

/// Worker threads that poll a transport until stopped.
class WorkerPool {
 public:
  WorkerPool(std::shared_ptr<WorkerTransport> transport, WorkerPoolOptions options);
  ~WorkerPool();

  void start();
  void stop();
  std::size_t jobs_completed() const { return completed_.load(); }

 private:
  void run(std::size_t index);

  std::shared_ptr<WorkerTransport> transport_;
  WorkerPoolOptions options_;
  std::vector<std::thread> threads_;
  std::atomic<bool> stopping_{false};
  std::atomic<std::size_t> completed_{0};
  std::mutex sleep_mutex_;
  std::condition_variable wake_;
};

}  // namespace autolab
