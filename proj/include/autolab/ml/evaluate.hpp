#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autolab/dataset.hpp"
#include "autolab/ml/algorithms.hpp"
#include "autolab/ml/metrics.hpp"
#include "autolab/ml/models.hpp"

namespace autolab::ml {

struct CvSpec {
  std::size_t folds = 5;
  std::uint64_t seed = 42;

  bool operator==(const CvSpec&) const = default;
};

struct EvaluationResult {
  /// Unweighted mean of `per_fold`.
  Metrics metrics;
  std::vector<Metrics> per_fold;
  /// Pooled out-of-fold ROC; present for classification only.
  std::optional<RocCurve> roc;
  std::uint64_t seed = 0;
  std::size_t cv_folds = 0;
  double wall_time = 0;
  /// False when some fit stopped at its iteration cap.
  bool converged = true;
  std::vector<std::string> warnings;

  /// Equality of everything except the measured wall time.
  bool same_outcome(const EvaluationResult& other) const;
  bool operator==(const EvaluationResult&) const = default;
};

/// Fold index per row: stratified by class for classification, plain shuffled
/// k-fold for regression. Deterministic in `seed`.
std::vector<std::size_t> assign_folds(const Target& y, std::size_t folds, std::uint64_t seed);

struct TrainOptions {
  /// Refit on all rows afterward and return the serialized model.
  bool fit_final_model = true;
};

struct TrainOutput {
  EvaluationResult result;
  /// Empty unless TrainOptions::fit_final_model.
  std::string model_artifact;
};

/// Cross-validates `config` on the dataset, then (optionally) fits on all rows.
/// Throws TaskMismatch, TooFewSamples, InvalidConfig, NumericalFailure.
TrainOutput train_evaluate(const Table& table, const DatasetRecord& dataset, const ParamConfig& config,
                           const CvSpec& cv, const TrainOptions& options = {});

/// Same, over an already-encoded design.
TrainOutput train_evaluate(const DesignData& data, const ParamConfig& config, const CvSpec& cv,
                           const TrainOptions& options = {});

// ---------------------------------------------------------------------------
// Model artifacts
//
// Layout: magic "AUTOLABM", u32 format version, algorithm name, u8 task,
// parameter JSON (all strings u64-length-prefixed), then an implementation
// defined body holding the feature encoding, seed, and model state.

inline constexpr char kArtifactMagic[8] = {'A', 'U', 'T', 'O', 'L', 'A', 'B', 'M'};
inline constexpr std::uint32_t kArtifactVersion = 1;

struct ArtifactHeader {
  std::uint32_t version = kArtifactVersion;
  std::string algorithm;
  TaskType task = TaskType::Classification;
  ParamConfig config;
};

struct LoadedModel {
  ArtifactHeader header;
  FeatureEncoding encoding;
  std::uint64_t seed = 0;
  std::unique_ptr<Model> model;
};

std::string save_model(const Model& model, TaskType task, const ParamConfig& config,
                       const FeatureEncoding& encoding, std::uint64_t seed);
/// Reads only the stable header. Throws FormatError.
ArtifactHeader read_artifact_header(std::string_view bytes);
LoadedModel load_model(std::string_view bytes);

void to_json(nlohmann::json& j, const EvaluationResult& r);
void from_json(const nlohmann::json& j, EvaluationResult& r);
void to_json(nlohmann::json& j, const CvSpec& cv);
void from_json(const nlohmann::json& j, CvSpec& cv);

}  // namespace autolab::ml
