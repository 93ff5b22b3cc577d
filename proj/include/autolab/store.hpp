#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "autolab/dataset.hpp"
#include "autolab/ml/evaluate.hpp"

namespace autolab {

enum class ExperimentStatus { Pending, Running, Completed, Failed };
enum class LaunchedBy { User, Ai };
enum class Vote { None, Up, Down };

std::string_view to_string(ExperimentStatus s);
std::string_view to_string(LaunchedBy s);
std::string_view to_string(Vote v);
ExperimentStatus parse_status(std::string_view text);
LaunchedBy parse_launched_by(std::string_view text);
Vote parse_vote(std::string_view text);

struct ExperimentRecord {
  std::string id;
  std::string dataset_id;
  TaskType task = TaskType::Classification;
  std::string algorithm;
  std::map<std::string, nlohmann::json> parameters;
  ml::CvSpec cv;
  ExperimentStatus status = ExperimentStatus::Pending;
  std::optional<ml::EvaluationResult> result;
  std::optional<std::string> error;
  LaunchedBy launched_by = LaunchedBy::User;
  Vote feedback = Vote::None;
  std::set<std::string> index_terms;
  /// SHA-256 of the fitted model artifact, when one was produced.
  std::optional<std::string> model_artifact;
  TimestampMs created_at = 0;
  std::optional<TimestampMs> finished_at;

  ml::ParamConfig config() const { return {algorithm, parameters}; }
  bool operator==(const ExperimentRecord&) const = default;
};

/// Deterministic experiment id for (dataset, configuration, cv spec).
std::string experiment_id_for(const std::string& dataset_id, const ml::ParamConfig& config, const ml::CvSpec& cv);

/// Dataset tags plus the algorithm name and task.
std::set<std::string> make_index_terms(const DatasetRecord& dataset, const std::string& algorithm);

/// Throws InvariantViolation naming the first broken invariant.
void check_invariants(const ExperimentRecord& r);

void to_json(nlohmann::json& j, const ExperimentRecord& r);
void from_json(const nlohmann::json& j, ExperimentRecord& r);

/// Conjunction of field = value predicates. Fields: id, dataset_id, algorithm,
/// status, launched_by, feedback, task, index_term.
using ExperimentFilter = std::vector<std::pair<std::string, std::string>>;

const std::vector<std::string>& filter_fields();

struct SemanticQuery {
  std::set<std::string> tags_any;
  std::string metric = "accuracy";
  /// Descending unless set; defaults follow the metric's direction.
  std::optional<bool> descending;
  std::size_t limit = std::numeric_limits<std::size_t>::max();
  ExperimentStatus status = ExperimentStatus::Completed;
};

struct BestConfig {
  std::string experiment_id;
  std::string algorithm;
  std::map<std::string, nlohmann::json> parameters;
  double metric_value = 0;
  std::string dataset_id;

  bool operator==(const BestConfig&) const = default;
};

void to_json(nlohmann::json& j, const BestConfig& b);

struct FeedbackEvent {
  std::string experiment_id;
  Vote vote = Vote::None;
  TimestampMs at = 0;
};

/// Embedded document store: an append-only JSON-lines log plus
/// content-addressed artifact files, with in-memory indexes rebuilt on open.
/// Many concurrent readers, one writer at a time.
class ExperimentStore {
 public:
  explicit ExperimentStore(std::filesystem::path dir);
  ~ExperimentStore();

  ExperimentStore(const ExperimentStore&) = delete;
  ExperimentStore& operator=(const ExperimentStore&) = delete;

  const std::filesystem::path& dir() const { return dir_; }

  // Datasets -----------------------------------------------------------------

  /// Stores the record and its canonical bytes. Returns false when a record
  /// with this id already exists (the stored one is left untouched).
  bool put_dataset(const DatasetRecord& record, std::string_view canonical_csv);
  std::optional<DatasetRecord> get_dataset(const std::string& id) const;
  /// Throws UnknownDataset.
  DatasetRecord require_dataset(const std::string& id) const;
  std::vector<DatasetRecord> list_datasets() const;
  /// Throws UnknownDataset.
  std::string dataset_bytes(const std::string& id) const;

  // Experiments --------------------------------------------------------------

  /// Idempotent on id: an identical re-put is a no-op, a differing one is a
  /// Conflict. Throws InvariantViolation, Conflict.
  std::string put_experiment(const ExperimentRecord& record);
  /// Replaces an existing record when the status transition is legal.
  /// Throws UnknownExperiment, InvariantViolation, Conflict.
  void update_experiment(const ExperimentRecord& record);
  std::optional<ExperimentRecord> get_experiment(const std::string& id) const;
  /// Throws UnknownExperiment.
  ExperimentRecord require_experiment(const std::string& id) const;
  /// Ordered by (created_at, id). Throws UnknownField.
  std::vector<ExperimentRecord> query_experiments(const ExperimentFilter& filter = {}) const;
  /// Throws UnknownMetric, Validation.
  std::vector<BestConfig> semantic_best_configs(const SemanticQuery& q) const;

  /// Records the vote on a completed experiment and appends a feedback event.
  /// Throws UnknownExperiment, NotCompleted, Validation.
  ExperimentRecord record_feedback(const std::string& experiment_id, Vote vote, TimestampMs at);
  std::vector<FeedbackEvent> feedback_events() const;

  // Artifacts ----------------------------------------------------------------

  /// Writes bytes under their SHA-256 and returns the hash.
  std::string put_artifact(std::string_view bytes);
  /// Throws IoError when absent.
  std::string get_artifact(const std::string& sha) const;
  bool has_artifact(const std::string& sha) const;
  void link_artifact(const std::string& experiment_id, const std::string& kind, const std::string& sha);
  /// kind -> sha of everything linked to the experiment.
  std::map<std::string, std::string> artifacts_of(const std::string& experiment_id) const;

  std::size_t experiment_count() const;

 private:
  void load();
  void append(const nlohmann::json& doc);
  void apply(const nlohmann::json& doc);
  void index_experiment(const ExperimentRecord& r);
  void unindex_experiment(const ExperimentRecord& r);
  std::filesystem::path artifact_path(const std::string& sha) const;

  std::filesystem::path dir_;
  int log_fd_ = -1;
  mutable std::shared_mutex mutex_;

  std::map<std::string, DatasetRecord> datasets_;
  std::map<std::string, ExperimentRecord> experiments_;
  std::map<std::string, std::set<std::string>> by_dataset_;
  std::map<std::string, std::set<std::string>> by_term_;
  std::vector<FeedbackEvent> feedback_;
  std::map<std::string, std::map<std::string, std::string>> links_;
};

/// Parses, validates, characterizes, and persists a dataset. Idempotent by
/// content id: re-ingesting the same bytes returns the stored record.
/// Throws ParseError, TargetError, EmptyDataset, Conflict (same bytes
/// ingested earlier with a different target or task).
struct IngestResult {
  DatasetRecord record;
  bool created = false;
};
IngestResult ingest_dataset(ExperimentStore& store, std::string_view raw, const std::string& name,
                            const std::string& target_column, TaskType task,
                            const std::vector<std::string>& tags, TimestampMs now,
                            const IngestOptions& options = {});

/// Loads the cleaned table of a stored dataset.
Table load_dataset_table(const ExperimentStore& store, const DatasetRecord& record);

}  // namespace autolab
