#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autolab/common.hpp"

namespace autolab {

enum class TaskType { Classification, Regression };
enum class ColumnKind { Numeric, Categorical };

std::string_view to_string(TaskType task);
std::string_view to_string(ColumnKind kind);
/// Throws Error{Validation} on anything other than "classification"/"regression".
TaskType parse_task_type(std::string_view text);

struct ColumnInfo {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;

  bool operator==(const ColumnInfo&) const = default;
};

/// Dataset characterization used by the recommender. The field order below is
/// the order of `to_array()` and of the knowledge-base file columns.
struct MetaFeatures {
  static constexpr std::size_t kSize = 10;

  double n_instances = 0;
  double n_features = 0;
  double n_classes = 0;
  double imbalance_ratio = 1;
  double frac_categorical = 0;
  double mean_abs_corr = 0;
  double mean_skew = 0;
  double mean_kurtosis = 0;
  double log_instances = 0;
  double log_features = 0;

  std::array<double, kSize> to_array() const;
  static MetaFeatures from_array(const std::array<double, kSize>& values);
  static const std::array<std::string_view, kSize>& field_names();
  /// Index of a field by name, or nullopt.
  static std::optional<std::size_t> field_index(std::string_view name);

  bool operator==(const MetaFeatures&) const = default;
};

struct DatasetRecord {
  std::string id;
  std::string name;
  std::vector<ColumnInfo> columns;
  std::string target_column;
  TaskType task_type = TaskType::Classification;
  std::set<std::string> tags;
  std::size_t n_rows = 0;
  MetaFeatures meta_features;
  TimestampMs created_at = 0;

  bool operator==(const DatasetRecord&) const = default;
};

/// One column of a cleaned table. Exactly one of `numeric`/`categorical` is
/// populated, according to `kind`.
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<double> numeric;
  std::vector<std::string> categorical;
};

/// A validated table with missing values imputed and missing-target rows dropped.
struct Table {
  std::vector<Column> columns;
  std::size_t n_rows = 0;

  /// Throws Error{UnknownField} if absent.
  std::size_t index_of(std::string_view name) const;
  const Column& column(std::string_view name) const { return columns[index_of(name)]; }
};

/// Header plus trimmed cells, exactly as read.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  char delimiter = ',';
};

struct IngestOptions {
  std::size_t row_limit = 1'000'000;
  /// Per-column kind overrides; applied after automatic detection.
  std::set<std::string> force_categorical;
  std::set<std::string> force_numeric;
};

struct PreparedDataset {
  DatasetRecord record;
  Table table;
  /// Bytes whose SHA-256 is the dataset id.
  std::string canonical_csv;
};

/// Parses a header-bearing comma- or tab-delimited table. Throws ParseError.
RawTable parse_csv(std::string_view raw, std::size_t row_limit = 1'000'000);

/// Trimmed cells, '\n' line endings, detected delimiter.
std::string canonical_csv(const RawTable& table);

bool is_missing_cell(std::string_view cell);
std::optional<double> parse_number(std::string_view cell);

/// Validates, types, imputes, and characterizes a dataset without touching
/// any storage. Throws ParseError, TargetError, EmptyDataset.
PreparedDataset prepare_dataset(std::string_view raw, const std::string& name,
                                const std::string& target_column, TaskType task,
                                const std::set<std::string>& tags, TimestampMs created_at,
                                const IngestOptions& options = {});

/// Rebuilds the cleaned table of a stored dataset from its canonical bytes,
/// honoring the column kinds recorded at ingest.
Table load_table(std::string_view canonical_bytes, const DatasetRecord& record);

/// Lowercases, trims, deduplicates, and drops empty tags.
std::set<std::string> normalize_tags(const std::vector<std::string>& tags);

MetaFeatures compute_meta_features(const Table& table, std::string_view target_column,
                                   TaskType task);

/// Sorted distinct class labels of a classification target (numeric order when
/// every label is numeric).
std::vector<std::string> class_labels(const Column& target);

void to_json(nlohmann::json& j, const MetaFeatures& m);
void from_json(const nlohmann::json& j, MetaFeatures& m);
void to_json(nlohmann::json& j, const DatasetRecord& r);
void from_json(const nlohmann::json& j, DatasetRecord& r);

}  // namespace autolab
