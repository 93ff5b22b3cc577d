#include "autolab/ml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace autolab::ml {

using nlohmann::json;

std::optional<double> Metrics::get(std::string_view name) const {
  if (name == "accuracy") return accuracy;
  if (name == "balanced_accuracy") return balanced_accuracy;
  if (name == "f1_macro") return f1_macro;
  if (name == "auc") return auc;
  if (name == "r2") return r2;
  if (name == "mse") return mse;
  throw Error(ErrorKind::UnknownMetric, "unknown metric '" + std::string(name) + "'");
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"accuracy", "balanced_accuracy", "f1_macro",
                                                 "auc",      "r2",                "mse"};
  return names;
}

bool is_metric_name(std::string_view name) {
  const auto& names = metric_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

void require_metric_name(std::string_view name) {
  if (!is_metric_name(name))
    throw Error(ErrorKind::UnknownMetric, "unknown metric '" + std::string(name) + "'");
}

bool higher_is_better(std::string_view metric) { return metric != "mse"; }

std::string_view primary_metric(TaskType task) {
  return task == TaskType::Classification ? "balanced_accuracy" : "r2";
}

namespace {

struct RocSweep {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> cumulative;  // (fp, tp) after each group
  std::uint64_t positives = 0;
  std::uint64_t negatives = 0;
  // 2 * (concordant pairs) + (tied pairs), accumulated exactly.
  unsigned __int128 twice_concordance = 0;
};

RocSweep sweep(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw Error(ErrorKind::LengthMismatch, "scores and labels differ in length");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error(ErrorKind::NumericalFailure, "non-finite score");
  RocSweep out;
  for (int l : labels) (l ? out.positives : out.negatives)++;
  if (out.positives == 0 || out.negatives == 0)
    throw Error(ErrorKind::SingleClass, "ROC needs both positive and negative labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t group_tp = 0, group_fp = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? group_tp : group_fp)++;
      ++j;
    }
    out.twice_concordance += static_cast<unsigned __int128>(group_fp) * (2 * tp + group_tp);
    tp += group_tp;
    fp += group_fp;
    out.cumulative.emplace_back(fp, tp);
    i = j;
  }
  return out;
}

double sweep_auc(const RocSweep& s) {
  return static_cast<double>(s.twice_concordance) /
         (2.0 * static_cast<double>(s.positives) * static_cast<double>(s.negatives));
}

}  // namespace

RocCurve compute_roc(std::span<const double> scores, std::span<const int> labels) {
  RocSweep s = sweep(scores, labels);
  RocCurve curve;
  curve.points.reserve(s.cumulative.size() + 1);
  curve.points.emplace_back(0.0, 0.0);
  const double n = static_cast<double>(s.negatives), p = static_cast<double>(s.positives);
  for (const auto& [fp, tp] : s.cumulative)
    curve.points.emplace_back(static_cast<double>(fp) / n, static_cast<double>(tp) / p);
  curve.auc = sweep_auc(s);
  return curve;
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  return sweep_auc(sweep(scores, labels));
}

std::vector<int> argmax_rows(const Matrix& scores) {
  std::vector<int> out(scores.rows, 0);
  for (std::size_t r = 0; r < scores.rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.cols; ++c)
      if (scores(r, c) > scores(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

Metrics classification_metrics(std::span<const int> truth, std::span<const int> predicted,
                               const Matrix& scores) {
  if (truth.size() != predicted.size() || scores.rows != truth.size())
    throw Error(ErrorKind::LengthMismatch, "predictions and truth differ in length");
  if (truth.empty()) throw Error(ErrorKind::LengthMismatch, "no predictions");

  int max_label = 0;
  for (int t : truth) max_label = std::max(max_label, t);
  for (int p : predicted) max_label = std::max(max_label, p);
  const std::size_t k = static_cast<std::size_t>(max_label) + 1;
  std::vector<double> tp(k, 0), fp(k, 0), fn(k, 0), support(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    support[truth[i]] += 1;
    if (truth[i] == predicted[i]) {
      ++correct;
      tp[truth[i]] += 1;
    } else {
      fp[predicted[i]] += 1;
      fn[truth[i]] += 1;
    }
  }

  Metrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());

  double recall_sum = 0;
  std::size_t present = 0;
  double f1_sum = 0;
  std::size_t f1_classes = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (support[c] > 0) {
      recall_sum += tp[c] / support[c];
      ++present;
    }
    if (support[c] > 0 || tp[c] + fp[c] > 0) {
      const double precision = tp[c] + fp[c] > 0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
      const double recall = support[c] > 0 ? tp[c] / support[c] : 0.0;
      f1_sum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
      ++f1_classes;
    }
  }
  m.balanced_accuracy = recall_sum / static_cast<double>(present);
  m.f1_macro = f1_sum / static_cast<double>(f1_classes);

  std::set<int> classes(truth.begin(), truth.end());
  if (classes.size() >= 2 && scores.cols >= 2) {
    std::vector<double> column(truth.size());
    std::vector<int> is_class(truth.size());
    auto one_vs_rest = [&](std::size_t c) {
      for (std::size_t i = 0; i < truth.size(); ++i) {
        column[i] = scores(i, c);
        is_class[i] = truth[i] == static_cast<int>(c) ? 1 : 0;
      }
      return roc_auc(column, is_class);
    };
    if (scores.cols == 2) {
      m.auc = one_vs_rest(1);
    } else {
      double sum = 0;
      std::size_t count = 0;
      for (int c : classes) {
        if (static_cast<std::size_t>(c) >= scores.cols) continue;
        sum += one_vs_rest(static_cast<std::size_t>(c));
        ++count;
      }
      if (count > 0) m.auc = sum / static_cast<double>(count);
    }
  }
  return m;
}

Metrics classification_metrics(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size())
    throw Error(ErrorKind::LengthMismatch, "predictions and truth differ in length");
  int max_label = 1;
  for (int t : truth) max_label = std::max(max_label, t);
  for (int p : predicted) max_label = std::max(max_label, p);
  Matrix scores(predicted.size(), static_cast<std::size_t>(max_label) + 1);
  for (std::size_t i = 0; i < predicted.size(); ++i) scores(i, predicted[i]) = 1.0;
  return classification_metrics(truth, predicted, scores);
}

Metrics regression_metrics(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size())
    throw Error(ErrorKind::LengthMismatch, "predictions and truth differ in length");
  if (truth.empty()) throw Error(ErrorKind::LengthMismatch, "no predictions");
  const double n = static_cast<double>(truth.size());
  double mean = 0;
  for (double t : truth) mean += t;
  mean /= n;
  double ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  Metrics m;
  m.mse = ss_res / n;
  m.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : (ss_res == 0 ? 1.0 : 0.0);
  return m;
}

Metrics mean_metrics(std::span<const Metrics> per_fold) {
  Metrics out;
  if (per_fold.empty()) return out;
  auto average = [&](std::optional<double> Metrics::*field) -> std::optional<double> {
    double sum = 0;
    for (const auto& m : per_fold) {
      if (!(m.*field)) return std::nullopt;
      sum += *(m.*field);
    }
    return sum / static_cast<double>(per_fold.size());
  };
  out.accuracy = average(&Metrics::accuracy);
  out.balanced_accuracy = average(&Metrics::balanced_accuracy);
  out.f1_macro = average(&Metrics::f1_macro);
  out.auc = average(&Metrics::auc);
  out.r2 = average(&Metrics::r2);
  out.mse = average(&Metrics::mse);
  return out;
}

void to_json(json& j, const Metrics& m) {
  j = json::object();
  for (const auto& name : metric_names())
    if (auto v = m.get(name)) j[name] = *v;
}

void from_json(const json& j, Metrics& m) {
  m = Metrics{};
  auto read = [&](const char* name, std::optional<double>& field) {
    if (j.contains(name) && !j.at(name).is_null()) field = j.at(name).get<double>();
  };
  read("accuracy", m.accuracy);
  read("balanced_accuracy", m.balanced_accuracy);
  read("f1_macro", m.f1_macro);
  read("auc", m.auc);
  read("r2", m.r2);
  read("mse", m.mse);
}

void to_json(json& j, const RocCurve& r) {
  json pts = json::array();
  for (const auto& [fpr, tpr] : r.points) pts.push_back({fpr, tpr});
  j = {{"points", pts}, {"auc", r.auc}};
}

void from_json(const json& j, RocCurve& r) {
  r.points.clear();
  for (const auto& p : j.at("points")) r.points.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  r.auc = j.at("auc").get<double>();
}

}  // namespace autolab::ml
