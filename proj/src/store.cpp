#include "autolab/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>

namespace autolab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(ExperimentStatus s) {
  switch (s) {
    case ExperimentStatus::Pending: return "pending";
    case ExperimentStatus::Running: return "running";
    case ExperimentStatus::Completed: return "completed";
    case ExperimentStatus::Failed: return "failed";
  }
  return "pending";
}

std::string_view to_string(LaunchedBy s) { return s == LaunchedBy::User ? "user" : "ai"; }

std::string_view to_string(Vote v) {
  switch (v) {
    case Vote::None: return "none";
    case Vote::Up: return "up";
    case Vote::Down: return "down";
  }
  return "none";
}

ExperimentStatus parse_status(std::string_view text) {
  for (auto s : {ExperimentStatus::Pending, ExperimentStatus::Running, ExperimentStatus::Completed,
                 ExperimentStatus::Failed})
    if (to_string(s) == text) return s;
  throw Error(ErrorKind::Validation, "unknown status '" + std::string(text) + "'");
}

LaunchedBy parse_launched_by(std::string_view text) {
  if (text == "user") return LaunchedBy::User;
  if (text == "ai") return LaunchedBy::Ai;
  throw Error(ErrorKind::Validation, "launched_by must be user or ai");
}

Vote parse_vote(std::string_view text) {
  for (auto v : {Vote::None, Vote::Up, Vote::Down})
    if (to_string(v) == text) return v;
  throw Error(ErrorKind::Validation, "vote must be up or down");
}

std::string experiment_id_for(const std::string& dataset_id, const ml::ParamConfig& config, const ml::CvSpec& cv) {
  const std::string key = dataset_id + "\n" + config.key() + "\n" + std::to_string(cv.folds) + "\n" +
                          std::to_string(cv.seed);
  return "exp-" + sha256_hex(key).substr(0, 20);
}

std::set<std::string> make_index_terms(const DatasetRecord& dataset, const std::string& algorithm) {
  std::set<std::string> terms = dataset.tags;
  terms.insert(algorithm);
  terms.insert(std::string(to_string(dataset.task_type)));
  return terms;
}

void check_invariants(const ExperimentRecord& r) {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvariantViolation, what); };
  if (r.id.empty()) fail("experiment id is empty");
  if (r.dataset_id.empty()) fail("experiment has no dataset_id");
  if (r.algorithm.empty()) fail("experiment has no algorithm");
  const bool completed = r.status == ExperimentStatus::Completed;
  const bool failed = r.status == ExperimentStatus::Failed;
  if (completed != r.result.has_value()) fail("status completed requires a result and vice versa");
  if (failed != r.error.has_value()) fail("status failed requires an error message and vice versa");
  if (r.feedback != Vote::None && !completed) fail("feedback is only allowed on completed experiments");
  if (r.result && r.result->per_fold.size() != r.result->cv_folds) fail("per_fold size differs from cv_folds");
}

void to_json(json& j, const ExperimentRecord& r) {
  j = json{{"id", r.id},
           {"dataset_id", r.dataset_id},
           {"task", to_string(r.task)},
           {"algorithm", r.algorithm},
           {"parameters", r.parameters},
           {"cv", r.cv},
           {"status", to_string(r.status)},
           {"result", r.result ? json(*r.result) : json(nullptr)},
           {"error", r.error ? json(*r.error) : json(nullptr)},
           {"launched_by", to_string(r.launched_by)},
           {"feedback", to_string(r.feedback)},
           {"index_terms", r.index_terms},
           {"model_artifact", r.model_artifact ? json(*r.model_artifact) : json(nullptr)},
           {"created_at", r.created_at},
           {"finished_at", r.finished_at ? json(*r.finished_at) : json(nullptr)}};
}

void from_json(const json& j, ExperimentRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.dataset_id = j.at("dataset_id").get<std::string>();
  r.task = parse_task_type(j.at("task").get<std::string>());
  r.algorithm = j.at("algorithm").get<std::string>();
  r.parameters = j.at("parameters").get<std::map<std::string, json>>();
  r.cv = j.at("cv").get<ml::CvSpec>();
  r.status = parse_status(j.at("status").get<std::string>());
  r.result.reset();
  if (j.contains("result") && !j["result"].is_null()) r.result = j["result"].get<ml::EvaluationResult>();
  r.error.reset();
  if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
  r.launched_by = parse_launched_by(j.value("launched_by", "user"));
  r.feedback = parse_vote(j.value("feedback", "none"));
  r.index_terms = j.value("index_terms", std::set<std::string>{});
  r.model_artifact.reset();
  if (j.contains("model_artifact") && !j["model_artifact"].is_null())
    r.model_artifact = j["model_artifact"].get<std::string>();
  r.created_at = j.at("created_at").get<TimestampMs>();
  r.finished_at.reset();
  if (j.contains("finished_at") && !j["finished_at"].is_null()) r.finished_at = j["finished_at"].get<TimestampMs>();
}

const std::vector<std::string>& filter_fields() {
  static const std::vector<std::string> fields{"id",          "dataset_id", "algorithm", "status",
                                               "launched_by", "feedback",   "task",      "index_term"};
  return fields;
}

void to_json(json& j, const BestConfig& b) {
  j = json{{"experiment_id", b.experiment_id},
           {"algorithm", b.algorithm},
           {"parameters", b.parameters},
           {"metric_value", b.metric_value},
           {"dataset_id", b.dataset_id}};
}

namespace {

bool matches(const ExperimentRecord& r, const std::string& field, const std::string& value) {
  if (field == "id") return r.id == value;
  if (field == "dataset_id") return r.dataset_id == value;
  if (field == "algorithm") return r.algorithm == value;
  if (field == "status") return to_string(r.status) == value;
  if (field == "launched_by") return to_string(r.launched_by) == value;
  if (field == "feedback") return to_string(r.feedback) == value;
  if (field == "task") return to_string(r.task) == value;
  if (field == "index_term") return r.index_terms.count(value) > 0;
  throw Error(ErrorKind::UnknownField, "unknown filter field '" + field + "'");
}

bool by_creation(const ExperimentRecord& a, const ExperimentRecord& b) {
  return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
}

bool legal_transition(ExperimentStatus from, ExperimentStatus to) {
  using S = ExperimentStatus;
  switch (from) {
    case S::Pending: return true;
    case S::Running: return true;
    case S::Completed: return to == S::Completed;
    case S::Failed: return to == S::Failed || to == S::Pending;
  }
  return false;
}

void write_all(int fd, std::string_view bytes, const fs::path& path) {
  while (!bytes.empty()) {
    const ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorKind::IoError, "write to " + path.string() + " failed: " + std::strerror(errno));
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

}  // namespace

ExperimentStore::ExperimentStore(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_ / "artifacts", ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir_.string() + ": " + ec.message());
  load();
  const auto log = dir_ / "log.jsonl";
  log_fd_ = ::open(log.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw Error(ErrorKind::IoError, "cannot open " + log.string() + ": " + std::strerror(errno));
}

ExperimentStore::~ExperimentStore() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

void ExperimentStore::load() {
  const auto log = dir_ / "log.jsonl";
  std::ifstream in(log, std::ios::binary);
  if (!in) return;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  std::size_t pos = 0, good_end = 0;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) break;  // unterminated tail: a torn write
    const std::string_view line(content.data() + pos, nl - pos);
    if (!line.empty()) {
      json doc = json::parse(line, nullptr, false);
      if (doc.is_discarded())
        throw Error(ErrorKind::FormatError, "corrupt record in " + log.string() + " at byte " + std::to_string(pos));
      apply(doc);
    }
    pos = nl + 1;
    good_end = pos;
  }
  if (good_end < content.size()) fs::resize_file(log, good_end);
}

void ExperimentStore::append(const json& doc) {
  const std::string line = doc.dump() + "\n";
  const auto log = dir_ / "log.jsonl";
  write_all(log_fd_, line, log);
  if (::fdatasync(log_fd_) != 0) throw Error(ErrorKind::IoError, "fdatasync failed: " + std::string(std::strerror(errno)));
}

void ExperimentStore::apply(const json& doc) {
  const std::string type = doc.at("type").get<std::string>();
  if (type == "dataset") {
    auto rec = doc.at("record").get<DatasetRecord>();
    datasets_[rec.id] = rec;
  } else if (type == "experiment") {
    auto rec = doc.at("record").get<ExperimentRecord>();
    auto it = experiments_.find(rec.id);
    if (it != experiments_.end()) unindex_experiment(it->second);
    experiments_[rec.id] = rec;
    index_experiment(rec);
  } else if (type == "feedback") {
    feedback_.push_back({doc.at("experiment_id").get<std::string>(), parse_vote(doc.at("vote").get<std::string>()),
                         doc.at("at").get<TimestampMs>()});
  } else if (type == "artifact_link") {
    links_[doc.at("experiment_id").get<std::string>()][doc.at("kind").get<std::string>()] =
        doc.at("sha256").get<std::string>();
  } else {
    throw Error(ErrorKind::FormatError, "unknown log document type '" + type + "'");
  }
}

void ExperimentStore::index_experiment(const ExperimentRecord& r) {
  by_dataset_[r.dataset_id].insert(r.id);
  for (const auto& t : r.index_terms) by_term_[t].insert(r.id);
}

void ExperimentStore::unindex_experiment(const ExperimentRecord& r) {
  by_dataset_[r.dataset_id].erase(r.id);
  for (const auto& t : r.index_terms) by_term_[t].erase(r.id);
}

fs::path ExperimentStore::artifact_path(const std::string& sha) const {
  const bool valid = sha.size() == 64 && std::all_of(sha.begin(), sha.end(), [](char c) {
                       return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
                     });
  if (!valid) throw Error(ErrorKind::Validation, "malformed artifact hash '" + sha + "'");
  return dir_ / "artifacts" / sha;
}

bool ExperimentStore::put_dataset(const DatasetRecord& record, std::string_view canonical_csv) {
  const std::string sha = put_artifact(canonical_csv);
  if (sha != record.id) throw Error(ErrorKind::InvariantViolation, "dataset id does not match its content hash");
  std::unique_lock lock(mutex_);
  if (datasets_.count(record.id)) return false;
  append(json{{"type", "dataset"}, {"record", record}});
  datasets_[record.id] = record;
  return true;
}

std::optional<DatasetRecord> ExperimentStore::get_dataset(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = datasets_.find(id);
  if (it == datasets_.end()) return std::nullopt;
  return it->second;
}

DatasetRecord ExperimentStore::require_dataset(const std::string& id) const {
  auto d = get_dataset(id);
  if (!d) throw Error(ErrorKind::UnknownDataset, "unknown dataset '" + id + "'");
  return *d;
}

std::vector<DatasetRecord> ExperimentStore::list_datasets() const {
  std::shared_lock lock(mutex_);
  std::vector<DatasetRecord> out;
  for (const auto& [id, d] : datasets_) out.push_back(d);
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id); });
  return out;
}

std::string ExperimentStore::dataset_bytes(const std::string& id) const {
  require_dataset(id);
  return get_artifact(id);
}

std::string ExperimentStore::put_experiment(const ExperimentRecord& record) {
  check_invariants(record);
  std::unique_lock lock(mutex_);
  auto it = experiments_.find(record.id);
  if (it != experiments_.end()) {
    if (it->second == record) return record.id;
    throw Error(ErrorKind::Conflict, "experiment '" + record.id + "' already exists with different content");
  }
  append(json{{"type", "experiment"}, {"record", record}});
  experiments_[record.id] = record;
  index_experiment(record);
  return record.id;
}

void ExperimentStore::update_experiment(const ExperimentRecord& record) {
  check_invariants(record);
  std::unique_lock lock(mutex_);
  auto it = experiments_.find(record.id);
  if (it == experiments_.end()) throw Error(ErrorKind::UnknownExperiment, "unknown experiment '" + record.id + "'");
  const ExperimentRecord& old = it->second;
  if (old == record) return;
  if (old.dataset_id != record.dataset_id || old.algorithm != record.algorithm ||
      old.parameters != record.parameters || old.cv != record.cv || old.task != record.task ||
      old.created_at != record.created_at)
    throw Error(ErrorKind::Conflict, "experiment '" + record.id + "' identity fields are immutable");
  if (!legal_transition(old.status, record.status))
    throw Error(ErrorKind::Conflict, "illegal status change " + std::string(to_string(old.status)) + " -> " +
                                         std::string(to_string(record.status)));
  if (old.status == ExperimentStatus::Completed && !(old.result == record.result))
    throw Error(ErrorKind::Conflict, "experiment '" + record.id + "' already has a result");
  append(json{{"type", "experiment"}, {"record", record}});
  unindex_experiment(old);
  it->second = record;
  index_experiment(record);
}

std::optional<ExperimentRecord> ExperimentStore::get_experiment(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = experiments_.find(id);
  if (it == experiments_.end()) return std::nullopt;
  return it->second;
}

ExperimentRecord ExperimentStore::require_experiment(const std::string& id) const {
  auto r = get_experiment(id);
  if (!r) throw Error(ErrorKind::UnknownExperiment, "unknown experiment '" + id + "'");
  return *r;
}

std::vector<ExperimentRecord> ExperimentStore::query_experiments(const ExperimentFilter& filter) const {
  for (const auto& [field, value] : filter)
    if (std::find(filter_fields().begin(), filter_fields().end(), field) == filter_fields().end())
      throw Error(ErrorKind::UnknownField, "unknown filter field '" + field + "'");
  std::shared_lock lock(mutex_);
  // Narrow through an index where the filter allows it.
  const std::set<std::string>* candidates = nullptr;
  static const std::set<std::string> kEmpty;
  for (const auto& [field, value] : filter) {
    if (field == "dataset_id") {
      auto it = by_dataset_.find(value);
      candidates = it == by_dataset_.end() ? &kEmpty : &it->second;
      break;
    }
    if (field == "index_term") {
      auto it = by_term_.find(value);
      candidates = it == by_term_.end() ? &kEmpty : &it->second;
      break;
    }
  }
  std::vector<ExperimentRecord> out;
  auto consider = [&](const ExperimentRecord& r) {
    for (const auto& [field, value] : filter)
      if (!matches(r, field, value)) return;
    out.push_back(r);
  };
  if (candidates) {
    for (const auto& id : *candidates) consider(experiments_.at(id));
  } else {
    for (const auto& [id, r] : experiments_) consider(r);
  }
  std::sort(out.begin(), out.end(), by_creation);
  return out;
}

std::vector<BestConfig> ExperimentStore::semantic_best_configs(const SemanticQuery& q) const {
  ml::require_metric_name(q.metric);
  if (q.limit < 1) throw Error(ErrorKind::Validation, "limit must be at least 1");
  const bool descending = q.descending.value_or(ml::higher_is_better(q.metric));
  std::vector<std::pair<double, const ExperimentRecord*>> hits;
  std::shared_lock lock(mutex_);
  std::set<std::string> ids;
  for (const auto& tag : q.tags_any) {
    auto it = by_term_.find(tag);
    if (it != by_term_.end()) ids.insert(it->second.begin(), it->second.end());
  }
  for (const auto& id : ids) {
    const auto& r = experiments_.at(id);
    if (r.status != q.status || !r.result) continue;
    auto value = r.result->metrics.get(q.metric);
    if (!value) continue;
    hits.emplace_back(*value, &r);
  }
  std::sort(hits.begin(), hits.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return descending ? a.first > b.first : a.first < b.first;
    return by_creation(*a.second, *b.second);
  });
  std::vector<BestConfig> out;
  for (const auto& [value, r] : hits) {
    if (out.size() >= q.limit) break;
    out.push_back({r->id, r->algorithm, r->parameters, value, r->dataset_id});
  }
  return out;
}

ExperimentRecord ExperimentStore::record_feedback(const std::string& experiment_id, Vote vote, TimestampMs at) {
  if (vote == Vote::None) throw Error(ErrorKind::Validation, "vote must be up or down");
  std::unique_lock lock(mutex_);
  auto it = experiments_.find(experiment_id);
  if (it == experiments_.end()) throw Error(ErrorKind::UnknownExperiment, "unknown experiment '" + experiment_id + "'");
  if (it->second.status != ExperimentStatus::Completed)
    throw Error(ErrorKind::NotCompleted, "experiment '" + experiment_id + "' is not completed");
  ExperimentRecord updated = it->second;
  updated.feedback = vote;
  append(json{{"type", "feedback"}, {"experiment_id", experiment_id}, {"vote", to_string(vote)}, {"at", at}});
  feedback_.push_back({experiment_id, vote, at});
  if (!(updated == it->second)) {
    append(json{{"type", "experiment"}, {"record", updated}});
    it->second = updated;
  }
  return updated;
}

std::vector<FeedbackEvent> ExperimentStore::feedback_events() const {
  std::shared_lock lock(mutex_);
  return feedback_;
}

std::string ExperimentStore::put_artifact(std::string_view bytes) {
  const std::string sha = sha256_hex(bytes);
  const fs::path path = artifact_path(sha);
  if (fs::exists(path)) return sha;
  // Write to a unique temporary file then rename, so readers never see a
  // partial artifact.
  fs::path tmp = path;
  static std::atomic<std::uint64_t> counter{0};
  tmp += ".tmp" + std::to_string(::getpid()) + "-" + std::to_string(counter++);
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorKind::IoError, "cannot create " + tmp.string() + ": " + std::strerror(errno));
  try {
    write_all(fd, bytes, tmp);
    if (::fsync(fd) != 0) throw Error(ErrorKind::IoError, "fsync failed for " + tmp.string());
  } catch (...) {
    ::close(fd);
    fs::remove(tmp);
    throw;
  }
  ::close(fd);
  fs::rename(tmp, path);
  return sha;
}

std::string ExperimentStore::get_artifact(const std::string& sha) const {
  std::ifstream in(artifact_path(sha), std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "artifact " + sha + " not found");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool ExperimentStore::has_artifact(const std::string& sha) const { return fs::exists(artifact_path(sha)); }

void ExperimentStore::link_artifact(const std::string& experiment_id, const std::string& kind, const std::string& sha) {
  if (!has_artifact(sha)) throw Error(ErrorKind::IoError, "artifact " + sha + " not found");
  std::unique_lock lock(mutex_);
  if (!experiments_.count(experiment_id))
    throw Error(ErrorKind::UnknownExperiment, "unknown experiment '" + experiment_id + "'");
  auto& slot = links_[experiment_id][kind];
  if (slot == sha) return;
  append(json{{"type", "artifact_link"}, {"experiment_id", experiment_id}, {"kind", kind}, {"sha256", sha}});
  slot = sha;
}

std::map<std::string, std::string> ExperimentStore::artifacts_of(const std::string& experiment_id) const {
  std::shared_lock lock(mutex_);
  std::map<std::string, std::string> out;
  auto it = links_.find(experiment_id);
  if (it != links_.end()) out = it->second;
  auto e = experiments_.find(experiment_id);
  if (e != experiments_.end() && e->second.model_artifact) out.emplace("model", *e->second.model_artifact);
  return out;
}

std::size_t ExperimentStore::experiment_count() const {
  std::shared_lock lock(mutex_);
  return experiments_.size();
}

IngestResult ingest_dataset(ExperimentStore& store, std::string_view raw, const std::string& name,
                            const std::string& target_column, TaskType task, const std::vector<std::string>& tags,
                            TimestampMs now, const IngestOptions& options) {
  auto prepared = prepare_dataset(raw, name, target_column, task, normalize_tags(tags), now, options);
  if (auto existing = store.get_dataset(prepared.record.id)) {
    if (existing->target_column != prepared.record.target_column || existing->task_type != prepared.record.task_type)
      throw Error(ErrorKind::Conflict, "dataset " + existing->id + " was ingested with target '" +
                                           existing->target_column + "' (" +
                                           std::string(to_string(existing->task_type)) + ")");
    return {*existing, false};
  }
  const bool created = store.put_dataset(prepared.record, prepared.canonical_csv);
  if (!created) return {store.require_dataset(prepared.record.id), false};
  return {prepared.record, true};
}

Table load_dataset_table(const ExperimentStore& store, const DatasetRecord& record) {
  return load_table(store.dataset_bytes(record.id), record);
}

}  // namespace autolab
