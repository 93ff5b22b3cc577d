#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "autolab/ml/matrix.hpp"

namespace autolab::ml {

/// Classification runs populate accuracy/balanced_accuracy/f1_macro/auc;
/// regression runs populate r2/mse.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> balanced_accuracy;
  std::optional<double> f1_macro;
  std::optional<double> auc;
  std::optional<double> r2;
  std::optional<double> mse;

  /// Throws UnknownMetric for names outside the metric set.
  std::optional<double> get(std::string_view name) const;

  bool operator==(const Metrics&) const = default;
};

const std::vector<std::string>& metric_names();
bool is_metric_name(std::string_view name);
/// Throws UnknownMetric.
void require_metric_name(std::string_view name);
/// False only for error metrics (mse).
bool higher_is_better(std::string_view metric);
/// The metric the recommender optimizes for a task.
std::string_view primary_metric(TaskType task);

struct RocCurve {
  /// (false positive rate, true positive rate), starting at (0,0) and ending at (1,1).
  std::vector<std::pair<double, double>> points;
  double auc = 0;

  bool operator==(const RocCurve&) const = default;
};

/// One point per distinct score, thresholds descending. Throws LengthMismatch, SingleClass.
RocCurve compute_roc(std::span<const double> scores, std::span<const int> labels);

/// Area under the ROC curve (ties count one half). Throws like compute_roc.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Hard-label metrics plus AUC from per-class scores (rows × n_classes). Binary
/// AUC uses the class-1 column; multiclass AUC is the macro one-vs-rest mean
/// over classes present in `truth`.
Metrics classification_metrics(std::span<const int> truth, std::span<const int> predicted,
                               const Matrix& scores);

/// Same, with the scores taken as one-hot indicators of `predicted`.
Metrics classification_metrics(std::span<const int> truth, std::span<const int> predicted);

Metrics regression_metrics(std::span<const double> truth, std::span<const double> predicted);

/// Argmax per row; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Matrix& scores);

/// Unweighted mean of each metric present in every entry.
Metrics mean_metrics(std::span<const Metrics> per_fold);

void to_json(nlohmann::json& j, const Metrics& m);
void from_json(const nlohmann::json& j, Metrics& m);
void to_json(nlohmann::json& j, const RocCurve& r);
void from_json(const nlohmann::json& j, RocCurve& r);

}  // namespace autolab::ml
