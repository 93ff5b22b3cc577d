#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "autolab/dataset.hpp"
#include "autolab/ml/algorithms.hpp"
#include "autolab/store.hpp"

namespace autolab {

// ---------------------------------------------------------------------------
// Knowledge base

enum class KbSource { Bootstrap, Live };

std::string_view to_string(KbSource s);

struct KBEntry {
  std::string dataset_name;
  MetaFeatures meta_features;
  std::string algorithm;
  std::map<std::string, nlohmann::json> parameters;
  std::string metric_name;
  double metric_value = 0;
  KbSource source = KbSource::Bootstrap;
  int feedback_delta = 0;
  /// Live entries only: the experiment the row came from.
  std::string experiment_id;

  ml::ParamConfig config() const { return {algorithm, parameters}; }
  bool operator==(const KBEntry&) const = default;
};

void to_json(nlohmann::json& j, const KBEntry& e);

struct FeatureStats {
  std::array<double, MetaFeatures::kSize> mean{};
  /// Population standard deviation; 1 for constant (or empty) columns.
  std::array<double, MetaFeatures::kSize> stddev{};
};

class KnowledgeBase {
 public:
  const std::vector<KBEntry>& entries() const { return entries_; }
  const FeatureStats& feature_stats() const { return stats_; }
  bool empty() const { return entries_.empty(); }
  std::size_t size() const { return entries_.size(); }

  void add(KBEntry entry);
  void add_all(const std::vector<KBEntry>& entries);
  /// Applies a vote to every entry of the experiment. Returns how many changed.
  std::size_t adjust_feedback(const std::string& experiment_id, int delta);
  bool has_experiment(const std::string& experiment_id) const;
  /// Drops entries for which `pred` holds.
  template <typename Pred>
  void remove_if(Pred pred) {
    std::erase_if(entries_, pred);
    recompute();
  }

 private:
  void recompute();

  std::vector<KBEntry> entries_;
  FeatureStats stats_;
};

/// Exact header of the tab-delimited bootstrap file.
const std::vector<std::string>& kb_columns();

struct KbRowError {
  std::size_t line = 0;
  std::string message;
};

struct KbLoadResult {
  KnowledgeBase kb;
  std::vector<KbRowError> errors;
};

/// Throws FormatError when the header is not the expected one.
KbLoadResult parse_knowledge_base(std::string_view text);
/// Throws IoError, FormatError.
KbLoadResult load_knowledge_base(const std::filesystem::path& path);
/// Serializes entries in the bootstrap format.
std::string format_knowledge_base(const std::vector<KBEntry>& entries);

/// KB rows for a completed experiment: one per metric present.
std::vector<KBEntry> live_entries(const ExperimentRecord& record, const DatasetRecord& dataset);
/// The grouping key of a stored dataset inside the KB.
std::string kb_dataset_name(const DatasetRecord& dataset);

// ---------------------------------------------------------------------------
// Expert rules

enum class CompareOp { Less, LessEqual, Greater, GreaterEqual, Equal };
enum class RuleAction { Boost, Penalize, Exclude };

struct Condition {
  std::string field;
  CompareOp op = CompareOp::Equal;
  double value = 0;

  bool holds(const MetaFeatures& meta) const;
};

struct RuleTarget {
  std::string algorithm;
  std::optional<std::string> param;
  nlohmann::json value;

  bool matches(const ml::ParamConfig& config) const;
};

struct ExpertRule {
  std::string rule_id;
  std::vector<Condition> condition;
  RuleAction action = RuleAction::Boost;
  RuleTarget target;
  double weight = 0;
  std::string description;

  bool fires(const MetaFeatures& meta) const;
};

/// Throws FormatError for malformed rules or unknown fields/algorithms/params.
std::vector<ExpertRule> parse_rules(const nlohmann::json& doc);
std::vector<ExpertRule> load_rules(const std::filesystem::path& path);
void to_json(nlohmann::json& j, const ExpertRule& r);

// ---------------------------------------------------------------------------
// Recommendation

struct Recommendation {
  ml::ParamConfig config;
  /// Neighbor-weighted mean of the metric; absent in the rule-only fallback.
  std::optional<double> expected_score;
  /// Ranking score after feedback and rule adjustments.
  double score = 0;
  std::string rationale;
  std::size_t rank = 0;
};

void to_json(nlohmann::json& j, const Recommendation& r);

struct RecommendOptions {
  TaskType task = TaskType::Classification;
  /// Defaults to the task's primary metric.
  std::string metric;
  std::size_t neighbors = 5;
  double feedback_step = 0.1;
  double feedback_min = 0.5;
  double feedback_max = 1.5;
};

/// Ranks configurations for a dataset with meta-features `meta`:
///   1. z-normalize against the KB feature stats,
///   2. take the k nearest KB datasets (mean meta of their entries),
///   3. score each config by the 1/(1+d)-weighted mean of its metric,
///   4. apply the feedback multiplier and the rules (weight order),
///   5. drop configs in `history`, 6. keep the top n.
/// With no usable KB rows, ranks the default grid by rules alone.
std::vector<Recommendation> recommend(const MetaFeatures& meta, const KnowledgeBase& kb,
                                      const std::vector<ExpertRule>& rules, const std::set<std::string>& history,
                                      std::size_t n, const RecommendOptions& options = {});

/// The rule-only ranking of `candidates` (ties keep candidate order).
std::vector<Recommendation> rank_by_rules(const MetaFeatures& meta, const std::vector<ExpertRule>& rules,
                                          const std::vector<ml::ParamConfig>& candidates,
                                          const std::set<std::string>& history, std::size_t n);

// ---------------------------------------------------------------------------
// Algorithm comparison

struct RankingReport {
  std::string metric;
  std::vector<std::string> algorithms;
  std::vector<std::string> datasets;
  /// Mean over datasets of each algorithm's best metric.
  std::vector<double> mean_metric;
  std::vector<double> average_rank;
  /// wins[a][b]: datasets on which a strictly beat b.
  std::vector<std::vector<std::size_t>> wins;
  /// best[a][d]: best metric of algorithm a on dataset d.
  std::vector<std::vector<std::optional<double>>> best;
};

void to_json(nlohmann::json& j, const RankingReport& r);

/// Throws UnknownMetric, EmptyInput.
RankingReport compare_algorithms(const std::vector<ExperimentRecord>& records, const std::string& metric);

/// Tab-delimited results table. Throws IoError.
std::string format_results_table(const std::vector<ExperimentRecord>& records,
                                 const std::map<std::string, std::string>& dataset_names);
void export_results_table(const std::vector<ExperimentRecord>& records,
                          const std::map<std::string, std::string>& dataset_names,
                          const std::filesystem::path& path);

/// Thread-safe holder of the KB and rules, fed by completed experiments.
class Recommender {
 public:
  Recommender() = default;

  void set_rules(std::vector<ExpertRule> rules);
  std::vector<ExpertRule> rules() const;
  /// Adds bootstrap rows. Returns the row errors.
  std::vector<KbRowError> load_bootstrap(std::string_view tsv);
  void add_entries(const std::vector<KBEntry>& entries);
  /// Adds live rows for a completed experiment (once per experiment).
  void fold_in(const ExperimentRecord& record, const DatasetRecord& dataset);
  /// Live rows for every completed experiment plus replayed feedback.
  void rebuild_live(const ExperimentStore& store);
  KnowledgeBase snapshot() const;

  std::vector<Recommendation> recommend_for(const DatasetRecord& dataset, const std::set<std::string>& history,
                                            std::size_t n) const;

  /// Records the vote and adjusts the experiment's KB rows.
  /// Throws UnknownExperiment, NotCompleted.
  KBEntry apply_feedback(ExperimentStore& store, const std::string& experiment_id, Vote vote, TimestampMs now);

 private:
  mutable std::shared_mutex mutex_;
  KnowledgeBase kb_;
  std::vector<ExpertRule> rules_;
};

/// Keys of every configuration already submitted on the dataset.
std::set<std::string> history_for(const ExperimentStore& store, const std::string& dataset_id);

}  // namespace autolab
