#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "autolab/ml/matrix.hpp"
#include "autolab/ml/serialize.hpp"

namespace autolab::ml {

/// Row indices of a matrix sorted by each column (ties by row index). Built
/// once per fit and shared by every tree grown on the same matrix.
struct SortedColumns {
  std::vector<std::vector<std::uint32_t>> order;

  static SortedColumns build(const Matrix& X);
};

struct TreeOptions {
  std::optional<std::size_t> max_depth;
  std::size_t min_samples_split = 2;
  /// Features examined per split; 0 means all of them.
  std::size_t max_features = 0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  /// Class probabilities (classification) or a single mean (regression).
  std::vector<double> value;
};

/// CART: Gini impurity for classes, squared error for real targets. Samples
/// with `x <= threshold` go left; thresholds are midpoints between adjacent
/// distinct values. Gain ties keep the lowest feature, then lowest threshold.
class Tree {
 public:
  /// `weights` holds a nonnegative multiplicity per row (bootstrap counts);
  /// rows with weight 0 are ignored. Classification when `n_classes > 0`.
  void fit(const Matrix& X, const SortedColumns& sorted, std::span<const int> classes,
           std::size_t n_classes, std::span<const double> values, std::span<const double> weights,
           const TreeOptions& options, Rng& rng);

  std::size_t leaf_of(std::span<const double> x) const;
  std::span<const double> predict(std::span<const double> x) const { return nodes_[leaf_of(x)].value; }

  std::vector<TreeNode>& nodes() { return nodes_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }

  void save(BinaryWriter& out) const;
  void load(BinaryReader& in);

  bool operator==(const Tree& other) const;

 private:
  std::vector<TreeNode> nodes_;
};

/// Resolves "sqrt"/"log2" into a feature count for `n_features` columns.
std::size_t resolve_max_features(std::string_view rule, std::size_t n_features);

}  // namespace autolab::ml
