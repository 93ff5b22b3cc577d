#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "autolab/dataset.hpp"

namespace autolab::ml {

enum class ParamType { Real, Integer, Choice };

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::Real;
  /// Allowed values; `null` stands for "unbounded" where a param allows it.
  std::vector<nlohmann::json> allowed;
  /// Plain-language explanation shown next to the control in the UI.
  std::string description;
};

struct AlgorithmSpec {
  std::string name;
  TaskType task = TaskType::Classification;
  std::string display_name;
  std::vector<ParamSpec> params;

  const ParamSpec* find_param(std::string_view param) const;
};

/// An algorithm plus one value per curated parameter.
struct ParamConfig {
  std::string algorithm;
  std::map<std::string, nlohmann::json> values;

  /// Sorted-key compact JSON object of `values`.
  std::string canonical_params() const;
  /// "algorithm" + canonical params; identifies a configuration.
  std::string key() const;

  bool operator==(const ParamConfig&) const = default;
};

/// The curated menu: six algorithms per task, in fixed display order.
const std::vector<AlgorithmSpec>& list_algorithms(TaskType task);

/// Throws Error{UnknownAlgorithm}.
const AlgorithmSpec& find_algorithm(TaskType task, std::string_view name);
bool has_algorithm(TaskType task, std::string_view name);

/// Position of the algorithm in the menu (tie-break order for rankings).
std::size_t algorithm_order(TaskType task, std::string_view name);

/// Cartesian product of every parameter's allowed values, first parameter
/// varying slowest.
std::vector<ParamConfig> default_grid(const AlgorithmSpec& spec);

/// Every grid configuration of every algorithm for the task, in menu order.
std::vector<ParamConfig> full_grid(TaskType task);

/// A single sensible configuration used when the user picks no parameters.
ParamConfig default_config(const AlgorithmSpec& spec);

/// Throws UnknownParam.
const std::string& describe_param(const AlgorithmSpec& spec, std::string_view param);

/// Fills missing params from `default_config` and checks every value against
/// the allowed set. Throws UnknownAlgorithm, TaskMismatch, UnknownParam, InvalidConfig.
ParamConfig validate_config(TaskType task, const ParamConfig& config);

/// Parses "k=v" overrides (value as JSON, else as a string) into a config.
ParamConfig config_from_assignments(const std::string& algorithm,
                                    const std::vector<std::string>& assignments);

void to_json(nlohmann::json& j, const ParamSpec& p);
void to_json(nlohmann::json& j, const AlgorithmSpec& a);
void to_json(nlohmann::json& j, const ParamConfig& c);
void from_json(const nlohmann::json& j, ParamConfig& c);

}  // namespace autolab::ml
