#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "autolab/ml/algorithms.hpp"
#include "autolab/ml/matrix.hpp"
#include "autolab/ml/serialize.hpp"
#include "autolab/ml/tree.hpp"

namespace autolab::ml {

/// A trainable estimator over a numeric design matrix.
///
/// `predict_scores` returns rows × n_classes for classifiers (larger means
/// more likely; the predicted class is the argmax) and rows × 1 for regressors.
/// A fitted model is immutable and safe to share between threads.
class Model {
 public:
  virtual ~Model() = default;

  virtual void fit(const Matrix& X, const Target& y) = 0;
  virtual Matrix predict_scores(const Matrix& X) const = 0;
  virtual void save(BinaryWriter& out) const = 0;
  virtual void load(BinaryReader& in) = 0;

  /// False when an iterative solver stopped at its iteration cap.
  bool converged() const { return converged_; }

 protected:
  bool converged_ = true;
};

std::vector<int> predict_classes(const Model& model, const Matrix& X);
std::vector<double> predict_values(const Model& model, const Matrix& X);

/// Builds an untrained model for a validated configuration.
std::unique_ptr<Model> make_model(TaskType task, const ParamConfig& config, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Linear models

/// L2-regularized binary logistic loss over a fixed design matrix:
///   mean_i log(1 + exp(z_i)) - y_i z_i  +  |w|^2 / (2 C n),   z = Xw + b.
/// Parameters are laid out as [w_0 .. w_{d-1}, b]; the intercept is not penalized.
class LogisticObjective {
 public:
  LogisticObjective(const Matrix& X, std::span<const double> y01, double C);

  double value(std::span<const double> params) const;
  std::vector<double> gradient(std::span<const double> params) const;
  std::size_t dimension() const { return X_.cols + 1; }

 private:
  const Matrix& X_;
  std::span<const double> y_;
  double penalty_;  // 1 / (C n)
};

/// Full-batch gradient descent with Armijo backtracking.
struct GradientDescentResult {
  std::vector<double> params;
  std::size_t iterations = 0;
  bool converged = false;
};
GradientDescentResult minimize_logistic(const LogisticObjective& objective,
                                        std::size_t max_iterations = 1000, double tolerance = 1e-6);

/// Logistic regression on standardized features; one-vs-rest beyond two classes.
class LogisticRegression final : public Model {
 public:
  explicit LogisticRegression(double C = 1.0) : C_(C) {}
  void fit(const Matrix& X, const Target& y) override;
  Matrix predict_scores(const Matrix& X) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

 private:
  double C_;
  std::size_t n_classes_ = 0;
  Standardizer scaler_;
  std::vector<std::vector<double>> coef_;  // one [w, b] per binary problem
};

/// Linear SVM trained by averaged stochastic subgradient descent: hinge loss
/// for classes (one-vs-rest beyond two), epsilon-insensitive loss for real
/// targets. Regularization strength is 1 / (C n).
class LinearSvm final : public Model {
 public:
  LinearSvm(TaskType task, double C, std::uint64_t seed, std::size_t epochs = 50)
      : task_(task), C_(C), seed_(seed), epochs_(epochs) {}
  void fit(const Matrix& X, const Target& y) override;
  Matrix predict_scores(const Matrix& X) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

 private:
  TaskType task_;
  double C_;
  std::uint64_t seed_;
  std::size_t epochs_;
  std::size_t n_classes_ = 0;
  Standardizer scaler_;
  double y_mean_ = 0, y_scale_ = 1;
  std::vector<std::vector<double>> coef_;
};

/// Elastic net by cyclic coordinate descent on standardized features:
///   |y - Xw - b|^2 / (2n) + alpha * l1_ratio * |w|_1 + alpha * (1 - l1_ratio) / 2 * |w|^2.
class ElasticNet final : public Model {
 public:
  ElasticNet(double alpha, double l1_ratio) : alpha_(alpha), l1_ratio_(l1_ratio) {}
  void fit(const Matrix& X, const Target& y) override;
  Matrix predict_scores(const Matrix& X) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

  /// Coefficients on the original feature scale, then intercept.
  std::vector<double> coefficients() const;

 private:
  double alpha_, l1_ratio_;
  Standardizer scaler_;
  std::vector<double> w_;
  double intercept_ = 0;
};

// ---------------------------------------------------------------------------
// Neighbors

/// Euclidean k-nearest neighbors on z-scored features. Distance ties keep the
/// lower training index.
class KNearestNeighbors final : public Model {
 public:
  KNearestNeighbors(TaskType task, std::size_t k, bool distance_weighted)
      : task_(task), k_(k), distance_weighted_(distance_weighted) {}
  void fit(const Matrix& X, const Target& y) override;
  Matrix predict_scores(const Matrix& X) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

 private:
  TaskType task_;
  std::size_t k_;
  bool distance_weighted_;
  Standardizer scaler_;
  Matrix train_;
  Target y_;
};

// ---------------------------------------------------------------------------
// Trees and ensembles

class DecisionTree final : public Model {
 public:
  DecisionTree(TaskType task, TreeOptions options, std::uint64_t seed)
      : task_(task), options_(options), seed_(seed) {}
  void fit(const Matrix& X, const Target& y) override;
  Matrix predict_scores(const Matrix& X) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

  const Tree& tree() const { return tree_; }

 private:
  TaskType task_;
  TreeOptions options_;
  std::uint64_t seed_;
  std::size_t n_outputs_ = 1;
  Tree tree_;
};

struct ForestOptions {
  std::size_t n_estimators = 100;
  /// "sqrt", "log2", or "all".
  std::string max_features = "sqrt";
  bool bootstrap = true;
  TreeOptions tree;
};

/// Bagged CART. Tree i draws its bootstrap sample and split features from the
/// stream derive_seed(seed, i).
class RandomForest final : public Model {
 public:
  RandomForest(TaskType task, ForestOptions options, std::uint64_t seed)
      : task_(task), options_(std::move(options)), seed_(seed) {}
  void fit(const Matrix& X, const Target& y) override;
  Matrix predict_scores(const Matrix& X) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

  const std::vector<Tree>& trees() const { return trees_; }

 private:
  TaskType task_;
  ForestOptions options_;
  std::uint64_t seed_;
  std::size_t n_outputs_ = 1;
  std::vector<Tree> trees_;
};

/// Gradient boosting of depth-3 regression trees: squared-error residuals for
/// real targets, log-loss (binary) or softmax (multiclass) gradients for
/// classes, with Newton leaf values and shrinkage.
class GradientBoosting final : public Model {
 public:
  GradientBoosting(TaskType task, std::size_t n_estimators, double learning_rate,
                   std::size_t max_depth = 3)
      : task_(task), n_estimators_(n_estimators), learning_rate_(learning_rate), max_depth_(max_depth) {}
  void fit(const Matrix& X, const Target& y) override;
  Matrix predict_scores(const Matrix& X) const override;
  void save(BinaryWriter& out) const override;
  void load(BinaryReader& in) override;

 private:
  /// Raw additive scores: rows × (1 for regression/binary, K for multiclass).
  Matrix raw_scores(const Matrix& X) const;

  TaskType task_;
  std::size_t n_estimators_;
  double learning_rate_;
  std::size_t max_depth_;
  std::size_t n_classes_ = 0;
  std::vector<double> init_;
  std::vector<std::vector<Tree>> stages_;  // stages_[m][k]
};

}  // namespace autolab::ml
