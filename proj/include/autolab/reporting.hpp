#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autolab/ml/metrics.hpp"
#include "autolab/store.hpp"

namespace autolab {

struct HeatmapMatrix {
  std::string metric;
  /// Algorithms, best average rank first.
  std::vector<std::string> row_labels;
  /// Dataset labels, lexicographic.
  std::vector<std::string> col_labels;
  std::vector<std::string> col_ids;
  /// cells[i][j]: best completed metric of algorithm i on dataset j.
  std::vector<std::vector<std::optional<double>>> cells;
};

/// {metric, row_labels, col_labels, cells (row-major, null for missing)}.
void to_json(nlohmann::json& j, const HeatmapMatrix& m);

/// `dataset_names` maps dataset ids to display labels; ids without a
/// name are shown as is. Throws UnknownMetric.
HeatmapMatrix build_heatmap(const std::vector<ExperimentRecord>& records, const std::string& metric,
                            const std::map<std::string, std::string>& dataset_names = {});

std::string heatmap_svg(const HeatmapMatrix& m);

/// Header `fpr,tpr`, 6-decimal fixed point.
std::string roc_csv(const ml::RocCurve& curve);
/// Throws FormatError.
std::vector<std::pair<double, double>> parse_roc_csv(std::string_view text);
std::string roc_svg(const ml::RocCurve& curve, const std::string& title);

struct RocExport {
  std::filesystem::path svg_path;
  std::filesystem::path csv_path;
  std::string svg_sha;
  std::string csv_sha;
};

/// The experiment's stored curve. Throws UnknownExperiment, NotCompleted,
/// NotClassification.
ml::RocCurve experiment_roc(const ExperimentStore& store, const std::string& experiment_id);

/// Writes <dir>/<id>-roc.svg and <dir>/<id>-roc.csv and links both into the
/// store as artifacts "roc_svg" and "roc_csv". Throws as experiment_roc, IoError.
RocExport export_roc(ExperimentStore& store, const std::string& experiment_id, const std::filesystem::path& dir);

}  // namespace autolab
