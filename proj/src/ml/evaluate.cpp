#include "autolab/ml/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>

namespace autolab::ml {

using nlohmann::json;

bool EvaluationResult::same_outcome(const EvaluationResult& other) const {
  return metrics == other.metrics && per_fold == other.per_fold && roc == other.roc &&
         seed == other.seed && cv_folds == other.cv_folds && converged == other.converged &&
         warnings == other.warnings;
}

std::vector<std::size_t> assign_folds(const Target& y, std::size_t folds, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  std::vector<std::size_t> fold(y.size());
  std::size_t counter = 0;
  auto deal = [&](std::vector<std::size_t>& idx) {
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t i : idx) fold[i] = counter++ % folds;
  };
  if (y.task == TaskType::Classification) {
    std::vector<std::vector<std::size_t>> by_class(y.n_classes);
    for (std::size_t i = 0; i < y.classes.size(); ++i) by_class[y.classes[i]].push_back(i);
    for (auto& idx : by_class) deal(idx);
  } else {
    std::vector<std::size_t> idx(y.size());
    std::iota(idx.begin(), idx.end(), 0);
    deal(idx);
  }
  return fold;
}

namespace {

constexpr std::uint64_t kFinalModelStream = 1'000'000;

void require_finite(const Matrix& scores) {
  for (double v : scores.data)
    if (!std::isfinite(v)) throw Error(ErrorKind::NumericalFailure, "model produced a non-finite prediction");
}

void check_sample_sizes(const Target& y, std::size_t folds) {
  if (folds < 2) throw Error(ErrorKind::InvalidConfig, "cross-validation needs at least 2 folds");
  if (y.task == TaskType::Classification) {
    std::vector<std::size_t> counts(y.n_classes, 0);
    for (int c : y.classes) ++counts[c];
    for (std::size_t c = 0; c < counts.size(); ++c)
      if (counts[c] < folds)
        throw Error(ErrorKind::TooFewSamples, "class " + std::to_string(c) + " has " +
                                                  std::to_string(counts[c]) + " rows, fewer than " +
                                                  std::to_string(folds) + " folds");
  } else if (y.size() < folds) {
    throw Error(ErrorKind::TooFewSamples, "fewer rows than folds");
  }
}

}  // namespace

TrainOutput train_evaluate(const DesignData& data, const ParamConfig& raw_config, const CvSpec& cv,
                           const TrainOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const TaskType task = data.y.task;
  const ParamConfig config = validate_config(task, raw_config);
  check_sample_sizes(data.y, cv.folds);

  const auto fold_of = assign_folds(data.y, cv.folds, cv.seed);
  const bool classification = task == TaskType::Classification;
  const std::size_t width = classification ? std::max<std::size_t>(data.y.n_classes, 2) : 1;
  Matrix oof(data.X.rows, width);

  TrainOutput out;
  EvaluationResult& result = out.result;
  result.seed = cv.seed;
  result.cv_folds = cv.folds;
  for (std::size_t f = 0; f < cv.folds; ++f) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == f ? test_idx : train_idx).push_back(i);
    auto model = make_model(task, config, derive_seed(cv.seed, 1 + f));
    model->fit(data.X.select_rows(train_idx), data.y.select(train_idx));
    result.converged = result.converged && model->converged();
    const Matrix scores = model->predict_scores(data.X.select_rows(test_idx));
    require_finite(scores);
    for (std::size_t i = 0; i < test_idx.size(); ++i)
      std::copy(scores.row(i).begin(), scores.row(i).end(), oof.row(test_idx[i]).begin());
    const Target truth = data.y.select(test_idx);
    if (classification) {
      result.per_fold.push_back(classification_metrics(truth.classes, argmax_rows(scores), scores));
    } else {
      result.per_fold.push_back(regression_metrics(truth.values, scores.data));
    }
  }
  result.metrics = mean_metrics(result.per_fold);

  if (classification) {
    std::vector<double> pooled;
    std::vector<int> labels;
    if (width == 2) {
      for (std::size_t i = 0; i < oof.rows; ++i) {
        pooled.push_back(oof(i, 1));
        labels.push_back(data.y.classes[i] == 1);
      }
    } else {
      // Micro-averaged one-vs-rest: every (row, class) pair is one decision.
      for (std::size_t i = 0; i < oof.rows; ++i)
        for (std::size_t c = 0; c < width; ++c) {
          pooled.push_back(oof(i, c));
          labels.push_back(data.y.classes[i] == static_cast<int>(c));
        }
    }
    result.roc = compute_roc(pooled, labels);
  }

  if (options.fit_final_model) {
    const std::uint64_t final_seed = derive_seed(cv.seed, kFinalModelStream);
    auto model = make_model(task, config, final_seed);
    model->fit(data.X, data.y);
    result.converged = result.converged && model->converged();
    out.model_artifact = save_model(*model, task, config, data.encoding, final_seed);
  }
  if (!result.converged)
    result.warnings.push_back("solver stopped at its iteration cap before converging");
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

TrainOutput train_evaluate(const Table& table, const DatasetRecord& dataset, const ParamConfig& config,
                           const CvSpec& cv, const TrainOptions& options) {
  const DesignData data = encode_dataset(table, dataset.target_column, dataset.task_type);
  return train_evaluate(data, config, cv, options);
}

// ---------------------------------------------------------------------------
// Artifacts

namespace {

void write_header(BinaryWriter& out, TaskType task, const ParamConfig& config) {
  out.put_raw(std::string_view(kArtifactMagic, sizeof kArtifactMagic));
  out.put<std::uint32_t>(kArtifactVersion);
  out.put_string(config.algorithm);
  out.put<std::uint8_t>(task == TaskType::Classification ? 0 : 1);
  out.put_string(config.canonical_params());
}

ArtifactHeader read_header(BinaryReader& in) {
  if (in.get_raw(sizeof kArtifactMagic) != std::string_view(kArtifactMagic, sizeof kArtifactMagic))
    throw Error(ErrorKind::FormatError, "not a model artifact");
  ArtifactHeader h;
  h.version = in.get<std::uint32_t>();
  if (h.version != kArtifactVersion)
    throw Error(ErrorKind::FormatError, "unsupported artifact version " + std::to_string(h.version));
  h.algorithm = in.get_string();
  h.task = in.get<std::uint8_t>() == 0 ? TaskType::Classification : TaskType::Regression;
  const json params = json::parse(in.get_string(), nullptr, false);
  if (!params.is_object()) throw Error(ErrorKind::FormatError, "corrupt artifact parameters");
  h.config.algorithm = h.algorithm;
  for (const auto& [k, v] : params.items()) h.config.values[k] = v;
  return h;
}

}  // namespace

std::string save_model(const Model& model, TaskType task, const ParamConfig& config,
                       const FeatureEncoding& encoding, std::uint64_t seed) {
  BinaryWriter out;
  write_header(out, task, config);
  out.put<std::uint64_t>(encoding.sources.size());
  for (const auto& s : encoding.sources) {
    out.put_string(s.column);
    out.put<std::uint8_t>(s.kind == ColumnKind::Numeric ? 0 : 1);
    out.put<std::uint64_t>(s.categories.size());
    for (const auto& c : s.categories) out.put_string(c);
  }
  out.put<std::uint64_t>(encoding.class_names.size());
  for (const auto& c : encoding.class_names) out.put_string(c);
  out.put<std::uint64_t>(seed);
  model.save(out);
  return out.take();
}

ArtifactHeader read_artifact_header(std::string_view bytes) {
  BinaryReader in(bytes);
  return read_header(in);
}

LoadedModel load_model(std::string_view bytes) {
  BinaryReader in(bytes);
  LoadedModel out;
  out.header = read_header(in);
  out.encoding.sources.resize(in.get<std::uint64_t>());
  for (auto& s : out.encoding.sources) {
    s.column = in.get_string();
    s.kind = in.get<std::uint8_t>() == 0 ? ColumnKind::Numeric : ColumnKind::Categorical;
    s.categories.resize(in.get<std::uint64_t>());
    for (auto& c : s.categories) c = in.get_string();
  }
  out.encoding.class_names.resize(in.get<std::uint64_t>());
  for (auto& c : out.encoding.class_names) c = in.get_string();
  out.seed = in.get<std::uint64_t>();
  out.model = make_model(out.header.task, out.header.config, out.seed);
  out.model->load(in);
  if (!in.at_end()) throw Error(ErrorKind::FormatError, "trailing bytes in model artifact");
  return out;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const CvSpec& cv) { j = {{"folds", cv.folds}, {"seed", cv.seed}}; }

void from_json(const json& j, CvSpec& cv) {
  cv = CvSpec{};
  if (j.contains("folds")) cv.folds = j.at("folds").get<std::size_t>();
  if (j.contains("seed")) cv.seed = j.at("seed").get<std::uint64_t>();
}

void to_json(json& j, const EvaluationResult& r) {
  j = {{"metrics", r.metrics},     {"per_fold", r.per_fold}, {"seed", r.seed},
       {"cv_folds", r.cv_folds},   {"wall_time", r.wall_time}, {"converged", r.converged},
       {"warnings", r.warnings}};
  j["roc"] = r.roc ? json(*r.roc) : json(nullptr);
}

void from_json(const json& j, EvaluationResult& r) {
  r = EvaluationResult{};
  r.metrics = j.at("metrics").get<Metrics>();
  r.per_fold = j.at("per_fold").get<std::vector<Metrics>>();
  if (j.contains("roc") && !j.at("roc").is_null()) r.roc = j.at("roc").get<RocCurve>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.cv_folds = j.at("cv_folds").get<std::size_t>();
  r.wall_time = j.value("wall_time", 0.0);
  r.converged = j.value("converged", true);
  r.warnings = j.value("warnings", std::vector<std::string>{});
}

}  // namespace autolab::ml
