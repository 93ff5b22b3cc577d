#include "autolab/ml/algorithms.hpp"

#include <algorithm>

namespace autolab::ml {

using nlohmann::json;

namespace {

ParamSpec cost_param(std::string name, ParamType type, std::vector<json> allowed,
                     std::string description) {
  return ParamSpec{std::move(name), type, std::move(allowed), std::move(description)};
}

const std::string kCDescription =
    "How strictly the model fits the training data. Larger values follow the training data more "
    "closely, which can improve accuracy on complex problems but risks overfitting; smaller "
    "values give a simpler, more cautious model.";

ParamSpec max_depth_param() {
  return cost_param("max_depth", ParamType::Integer, {3, 5, 10, nullptr},
                    "How many questions the tree may ask in a row before deciding (none = no "
                    "limit). Deeper trees capture more detailed patterns and may be more "
                    "accurate, but take longer to train and are more likely to memorize noise.");
}

ParamSpec min_samples_split_param() {
  return cost_param("min_samples_split", ParamType::Integer, {2, 5, 20},
                    "The smallest group of rows the tree is allowed to split further. Larger "
                    "values make the tree simpler and faster to train, which reduces overfitting "
                    "but may miss fine-grained patterns.");
}

ParamSpec knn_k_param() {
  return cost_param("k", ParamType::Integer, {1, 3, 5, 11},
                    "How many of the most similar training rows vote on each prediction. More "
                    "neighbors give smoother, more stable predictions; fewer neighbors react to "
                    "local detail but are more sensitive to noise. Prediction time grows with "
                    "the size of the training data, not with this value.");
}

ParamSpec knn_weights_param() {
  return cost_param("weights", ParamType::Choice, {"uniform", "distance"},
                    "Whether every neighbor's vote counts the same (uniform) or closer neighbors "
                    "count more (distance).");
}

ParamSpec n_estimators_forest_param() {
  return cost_param("n_estimators", ParamType::Integer, {10, 100},
                    "Number of decision trees in the forest. Adding more trees improves model "
                    "quality and makes results more stable, but increases training time; "
                    "removing trees trains faster at some cost in performance.");
}

ParamSpec max_features_param() {
  return cost_param("max_features", ParamType::Choice, {"sqrt", "log2"},
                    "How many input columns each tree considers at every split (square root or "
                    "base-2 logarithm of the column count). Considering fewer columns makes "
                    "trees more diverse and faster to train.");
}

ParamSpec n_estimators_boosting_param() {
  return cost_param("n_estimators", ParamType::Integer, {50, 100},
                    "Number of boosting rounds, each adding a small tree that corrects earlier "
                    "mistakes. More rounds usually improve accuracy but increase training time "
                    "and can overfit when combined with a high learning rate.");
}

ParamSpec learning_rate_param() {
  return cost_param("learning_rate", ParamType::Real, {0.01, 0.1},
                    "How much each new tree is allowed to change the model. Smaller values learn "
                    "more carefully and generalize better but need more rounds (longer training) "
                    "to reach the same quality.");
}

std::vector<AlgorithmSpec> build_classifiers() {
  return {
      {"logistic_regression", TaskType::Classification, "Logistic Regression",
       {cost_param("C", ParamType::Real, {0.01, 0.1, 1.0, 10.0}, kCDescription)}},
      {"decision_tree", TaskType::Classification, "Decision Tree",
       {max_depth_param(), min_samples_split_param()}},
      {"knn", TaskType::Classification, "k-Nearest Neighbors",
       {knn_k_param(), knn_weights_param()}},
      {"svm", TaskType::Classification, "Support Vector Machine",
       {cost_param("C", ParamType::Real, {0.01, 0.1, 1.0, 10.0}, kCDescription)}},
      {"random_forest", TaskType::Classification, "Random Forest",
       {n_estimators_forest_param(), max_features_param()}},
      {"gradient_boosting", TaskType::Classification, "Gradient Boosting",
       {n_estimators_boosting_param(), learning_rate_param()}},
  };
}

std::vector<AlgorithmSpec> build_regressors() {
  return {
      {"elastic_net", TaskType::Regression, "ElasticNet",
       {cost_param("alpha", ParamType::Real, {0.001, 0.01, 0.1, 1.0},
                   "Overall strength of the penalty that keeps coefficients small. Larger values "
                   "give simpler models that are less likely to overfit but may underfit."),
        cost_param("l1_ratio", ParamType::Real, {0.25, 0.5, 0.75},
                   "Balance between dropping unhelpful columns entirely (closer to 1) and "
                   "shrinking all coefficients evenly (closer to 0).")}},
      {"decision_tree", TaskType::Regression, "Decision Tree",
       {max_depth_param(), min_samples_split_param()}},
      {"knn", TaskType::Regression, "k-Nearest Neighbors", {knn_k_param(), knn_weights_param()}},
      {"svm", TaskType::Regression, "Support Vector Machine",
       {cost_param("C", ParamType::Real, {0.01, 0.1, 1.0, 10.0}, kCDescription)}},
      {"random_forest", TaskType::Regression, "Random Forest",
       {n_estimators_forest_param(), max_features_param()}},
      {"gradient_boosting", TaskType::Regression, "Gradient Boosting",
       {n_estimators_boosting_param(), learning_rate_param()}},
  };
}

// Defaults for a single run without a grid.
const std::map<std::string, std::map<std::string, json>>& default_values() {
  static const std::map<std::string, std::map<std::string, json>> values = {
      {"logistic_regression", {{"C", 1.0}}},
      {"elastic_net", {{"alpha", 0.01}, {"l1_ratio", 0.5}}},
      {"decision_tree", {{"max_depth", nullptr}, {"min_samples_split", 2}}},
      {"knn", {{"k", 5}, {"weights", "uniform"}}},
      {"svm", {{"C", 1.0}}},
      {"random_forest", {{"n_estimators", 100}, {"max_features", "sqrt"}}},
      {"gradient_boosting", {{"n_estimators", 100}, {"learning_rate", 0.1}}},
  };
  return values;
}

bool value_allowed(const ParamSpec& p, const json& v) {
  for (const auto& a : p.allowed) {
    if (a.is_null() || v.is_null()) {
      if (a.is_null() && v.is_null()) return true;
      continue;
    }
    if (a.is_number() && v.is_number()) {
      if (a.get<double>() == v.get<double>()) return true;
      continue;
    }
    if (a == v) return true;
  }
  return false;
}

// Stores numbers in the allowed set's own representation so that 1 and 1.0
// produce the same canonical string.
json canonical_value(const ParamSpec& p, const json& v) {
  for (const auto& a : p.allowed) {
    if (a.is_number() && v.is_number() && a.get<double>() == v.get<double>()) return a;
  }
  return v;
}

}  // namespace

const ParamSpec* AlgorithmSpec::find_param(std::string_view param) const {
  for (const auto& p : params)
    if (p.name == param) return &p;
  return nullptr;
}

std::string ParamConfig::canonical_params() const {
  json obj = json::object();
  for (const auto& [k, v] : values) obj[k] = v;
  return obj.dump();
}

std::string ParamConfig::key() const { return algorithm + canonical_params(); }

const std::vector<AlgorithmSpec>& list_algorithms(TaskType task) {
  static const std::vector<AlgorithmSpec> classifiers = build_classifiers();
  static const std::vector<AlgorithmSpec> regressors = build_regressors();
  return task == TaskType::Classification ? classifiers : regressors;
}

bool has_algorithm(TaskType task, std::string_view name) {
  const auto& algos = list_algorithms(task);
  return std::any_of(algos.begin(), algos.end(), [&](const AlgorithmSpec& a) { return a.name == name; });
}

const AlgorithmSpec& find_algorithm(TaskType task, std::string_view name) {
  for (const auto& a : list_algorithms(task))
    if (a.name == name) return a;
  throw Error(ErrorKind::UnknownAlgorithm, "unknown " + std::string(to_string(task)) +
                                               " algorithm '" + std::string(name) + "'");
}

std::size_t algorithm_order(TaskType task, std::string_view name) {
  const auto& algos = list_algorithms(task);
  for (std::size_t i = 0; i < algos.size(); ++i)
    if (algos[i].name == name) return i;
  return algos.size();
}

std::vector<ParamConfig> default_grid(const AlgorithmSpec& spec) {
  std::vector<ParamConfig> grid{ParamConfig{spec.name, {}}};
  for (const auto& p : spec.params) {
    std::vector<ParamConfig> next;
    next.reserve(grid.size() * p.allowed.size());
    for (const auto& partial : grid)
      for (const auto& v : p.allowed) {
        ParamConfig c = partial;
        c.values[p.name] = v;
        next.push_back(std::move(c));
      }
    grid = std::move(next);
  }
  return grid;
}

std::vector<ParamConfig> full_grid(TaskType task) {
  std::vector<ParamConfig> out;
  for (const auto& spec : list_algorithms(task)) {
    auto g = default_grid(spec);
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

ParamConfig default_config(const AlgorithmSpec& spec) {
  return ParamConfig{spec.name, default_values().at(spec.name)};
}

const std::string& describe_param(const AlgorithmSpec& spec, std::string_view param) {
  if (const ParamSpec* p = spec.find_param(param)) return p->description;
  throw Error(ErrorKind::UnknownParam,
              "algorithm '" + spec.name + "' has no parameter '" + std::string(param) + "'");
}

ParamConfig validate_config(TaskType task, const ParamConfig& config) {
  if (!has_algorithm(task, config.algorithm)) {
    const TaskType other = task == TaskType::Classification ? TaskType::Regression : TaskType::Classification;
    if (has_algorithm(other, config.algorithm))
      throw Error(ErrorKind::TaskMismatch, "algorithm '" + config.algorithm + "' does not support " +
                                               std::string(to_string(task)));
    throw Error(ErrorKind::UnknownAlgorithm, "unknown algorithm '" + config.algorithm + "'");
  }
  const AlgorithmSpec& spec = find_algorithm(task, config.algorithm);
  ParamConfig out = default_config(spec);
  for (const auto& [name, value] : config.values) {
    const ParamSpec* p = spec.find_param(name);
    if (!p)
      throw Error(ErrorKind::UnknownParam,
                  "algorithm '" + spec.name + "' has no parameter '" + name + "'");
    if (!value_allowed(*p, value))
      throw Error(ErrorKind::InvalidConfig, "value " + value.dump() + " is not allowed for " +
                                                spec.name + "." + name);
    out.values[name] = canonical_value(*p, value);
  }
  return out;
}

ParamConfig config_from_assignments(const std::string& algorithm,
                                    const std::vector<std::string>& assignments) {
  ParamConfig c{algorithm, {}};
  for (const auto& a : assignments) {
    auto eq = a.find('=');
    if (eq == std::string::npos || eq == 0)
      throw Error(ErrorKind::Validation, "parameter '" + a + "' is not of the form name=value");
    const std::string name = trim(a.substr(0, eq));
    const std::string text = trim(a.substr(eq + 1));
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    if (text == "none") value = nullptr;
    c.values[name] = value;
  }
  return c;
}

void to_json(json& j, const ParamSpec& p) {
  static const char* kTypes[] = {"real", "integer", "choice"};
  j = {{"name", p.name},
       {"type", kTypes[static_cast<int>(p.type)]},
       {"allowed", p.allowed},
       {"description", p.description}};
}

void to_json(json& j, const AlgorithmSpec& a) {
  j = {{"name", a.name}, {"task", to_string(a.task)}, {"display_name", a.display_name}, {"params", a.params}};
}

void to_json(json& j, const ParamConfig& c) {
  json values = json::object();
  for (const auto& [k, v] : c.values) values[k] = v;
  j = {{"algorithm", c.algorithm}, {"values", values}};
}

void from_json(const json& j, ParamConfig& c) {
  c.algorithm = j.at("algorithm").get<std::string>();
  c.values.clear();
  if (j.contains("values"))
    for (const auto& [k, v] : j.at("values").items()) c.values[k] = v;
}

}  // namespace autolab::ml
