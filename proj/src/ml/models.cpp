#include "autolab/ml/models.hpp"

#include "autolab/ml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace autolab::ml {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void save_scaler(BinaryWriter& out, const Standardizer& s) {
  out.put_doubles(s.mean);
  out.put_doubles(s.scale);
}

Standardizer load_scaler(BinaryReader& in) {
  Standardizer s;
  s.mean = in.get_doubles();
  s.scale = in.get_doubles();
  if (s.mean.size() != s.scale.size()) throw Error(ErrorKind::FormatError, "corrupt scaler");
  return s;
}

void save_coefs(BinaryWriter& out, const std::vector<std::vector<double>>& coef) {
  out.put<std::uint64_t>(coef.size());
  for (const auto& c : coef) out.put_doubles(c);
}

std::vector<std::vector<double>> load_coefs(BinaryReader& in) {
  std::vector<std::vector<double>> coef(in.get<std::uint64_t>());
  for (auto& c : coef) c = in.get_doubles();
  return coef;
}

// Binary sub-problems of a one-vs-rest scheme: a single problem (class 1 vs
// class 0) for two classes, one per class otherwise.
std::size_t binary_problems(std::size_t n_classes) { return n_classes <= 2 ? 1 : n_classes; }

int positive_class(std::size_t problem, std::size_t n_classes) {
  return n_classes <= 2 ? 1 : static_cast<int>(problem);
}

double linear_score(std::span<const double> coef, std::span<const double> x) {
  return dot(coef.first(x.size()), x) + coef[x.size()];
}

Matrix ovr_scores(const std::vector<std::vector<double>>& coef, std::size_t n_classes,
                  const Matrix& Xs, bool probabilities) {
  Matrix out(Xs.rows, std::max<std::size_t>(n_classes, 2));
  for (std::size_t r = 0; r < Xs.rows; ++r) {
    auto x = Xs.row(r);
    if (n_classes <= 2) {
      const double z = linear_score(coef[0], x);
      if (probabilities) {
        const double p = sigmoid(z);
        out(r, 0) = 1.0 - p;
        out(r, 1) = p;
      } else {
        out(r, 0) = -z;
        out(r, 1) = z;
      }
    } else {
      for (std::size_t k = 0; k < n_classes; ++k) {
        const double z = linear_score(coef[k], x);
        out(r, k) = probabilities ? sigmoid(z) : z;
      }
    }
  }
  return out;
}

}  // namespace

std::vector<int> predict_classes(const Model& model, const Matrix& X) {
  return argmax_rows(model.predict_scores(X));
}

std::vector<double> predict_values(const Model& model, const Matrix& X) {
  Matrix s = model.predict_scores(X);
  return std::move(s.data);
}

// ---------------------------------------------------------------------------
// Logistic regression

LogisticObjective::LogisticObjective(const Matrix& X, std::span<const double> y01, double C)
    : X_(X), y_(y01), penalty_(1.0 / (C * static_cast<double>(X.rows))) {}

double LogisticObjective::value(std::span<const double> params) const {
  const std::size_t d = X_.cols;
  double loss = 0;
  for (std::size_t i = 0; i < X_.rows; ++i) {
    const double z = linear_score(params, X_.row(i));
    loss += softplus(z) - y_[i] * z;
  }
  loss /= static_cast<double>(X_.rows);
  double reg = 0;
  for (std::size_t j = 0; j < d; ++j) reg += params[j] * params[j];
  return loss + 0.5 * penalty_ * reg;
}

std::vector<double> LogisticObjective::gradient(std::span<const double> params) const {
  const std::size_t d = X_.cols;
  std::vector<double> g(d + 1, 0.0);
  for (std::size_t i = 0; i < X_.rows; ++i) {
    auto x = X_.row(i);
    const double residual = sigmoid(linear_score(params, x)) - y_[i];
    for (std::size_t j = 0; j < d; ++j) g[j] += residual * x[j];
    g[d] += residual;
  }
  const double inv_n = 1.0 / static_cast<double>(X_.rows);
  for (std::size_t j = 0; j < d; ++j) g[j] = g[j] * inv_n + penalty_ * params[j];
  g[d] *= inv_n;
  return g;
}

GradientDescentResult minimize_logistic(const LogisticObjective& objective,
                                        std::size_t max_iterations, double tolerance) {
  GradientDescentResult out;
  out.params.assign(objective.dimension(), 0.0);
  std::vector<double> trial(out.params.size());
  double step = 1.0;
  double f = objective.value(out.params);
  for (; out.iterations < max_iterations; ++out.iterations) {
    const auto g = objective.gradient(out.params);
    double g_inf = 0, g_sq = 0;
    for (double v : g) {
      g_inf = std::max(g_inf, std::fabs(v));
      g_sq += v * v;
    }
    if (g_inf < tolerance) {
      out.converged = true;
      return out;
    }
    double f_trial;
    while (true) {
      for (std::size_t j = 0; j < trial.size(); ++j) trial[j] = out.params[j] - step * g[j];
      f_trial = objective.value(trial);
      if (f_trial <= f - 0.5 * step * g_sq || step < 1e-16) break;
      step *= 0.5;
    }
    out.params.swap(trial);
    f = f_trial;
    step = std::min(step * 2.0, 1e6);
  }
  return out;
}

void LogisticRegression::fit(const Matrix& X, const Target& y) {
  n_classes_ = y.n_classes;
  scaler_ = Standardizer::fit(X);
  const Matrix Xs = scaler_.transform(X);
  coef_.clear();
  converged_ = true;
  std::vector<double> y01(y.classes.size());
  for (std::size_t p = 0; p < binary_problems(n_classes_); ++p) {
    const int positive = positive_class(p, n_classes_);
    for (std::size_t i = 0; i < y01.size(); ++i) y01[i] = y.classes[i] == positive ? 1.0 : 0.0;
    LogisticObjective objective(Xs, y01, C_);
    auto result = minimize_logistic(objective);
    converged_ = converged_ && result.converged;
    coef_.push_back(std::move(result.params));
  }
}

Matrix LogisticRegression::predict_scores(const Matrix& X) const {
  return ovr_scores(coef_, n_classes_, scaler_.transform(X), true);
}

void LogisticRegression::save(BinaryWriter& out) const {
  out.put(C_);
  out.put<std::uint64_t>(n_classes_);
  save_scaler(out, scaler_);
  save_coefs(out, coef_);
}

void LogisticRegression::load(BinaryReader& in) {
  C_ = in.get<double>();
  n_classes_ = in.get<std::uint64_t>();
  scaler_ = load_scaler(in);
  coef_ = load_coefs(in);
  if (coef_.size() != binary_problems(n_classes_)) throw Error(ErrorKind::FormatError, "corrupt model");
}

// ---------------------------------------------------------------------------
// Linear SVM

namespace {

constexpr double kSvmInitialStep = 0.1;
constexpr double kSvrEpsilon = 0.1;

// Averaged SGD; `loss_step` applies the subgradient step for one sample.
template <typename LossStep>
std::vector<double> averaged_sgd(const Matrix& Xs, double lambda, std::size_t epochs, Rng& rng,
                                 LossStep loss_step) {
  const std::size_t d = Xs.cols;
  std::vector<double> w(d + 1, 0.0), avg(d + 1, 0.0);
  std::vector<std::size_t> order(Xs.rows);
  std::iota(order.begin(), order.end(), 0);
  double t = 0;
  double averaged = 0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const double eta = kSvmInitialStep / (1.0 + lambda * kSvmInitialStep * t);
      t += 1;
      auto x = Xs.row(i);
      const double f = linear_score(w, x);
      const double decay = 1.0 - eta * lambda;
      for (std::size_t j = 0; j < d; ++j) w[j] *= decay;
      const double direction = loss_step(i, f);
      if (direction != 0.0) {
        for (std::size_t j = 0; j < d; ++j) w[j] += eta * direction * x[j];
        w[d] += eta * direction;
      }
      if (epoch > 0) {
        averaged += 1;
        for (std::size_t j = 0; j <= d; ++j) avg[j] += (w[j] - avg[j]) / averaged;
      }
    }
  }
  return averaged > 0 ? avg : w;
}

}  // namespace

void LinearSvm::fit(const Matrix& X, const Target& y) {
  scaler_ = Standardizer::fit(X);
  const Matrix Xs = scaler_.transform(X);
  const double lambda = 1.0 / (C_ * static_cast<double>(std::max<std::size_t>(X.rows, 1)));
  coef_.clear();
  if (task_ == TaskType::Regression) {
    n_classes_ = 0;
    const double n = static_cast<double>(y.values.size());
    y_mean_ = std::accumulate(y.values.begin(), y.values.end(), 0.0) / n;
    double var = 0;
    for (double v : y.values) var += (v - y_mean_) * (v - y_mean_);
    y_scale_ = std::sqrt(var / n);
    if (!(y_scale_ > 1e-12)) y_scale_ = 1.0;
    std::vector<double> ys(y.values.size());
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = (y.values[i] - y_mean_) / y_scale_;
    Rng rng(derive_seed(seed_, 0));
    coef_.push_back(averaged_sgd(Xs, lambda, epochs_, rng, [&](std::size_t i, double f) {
      const double r = ys[i] - f;
      return r > kSvrEpsilon ? 1.0 : (r < -kSvrEpsilon ? -1.0 : 0.0);
    }));
    return;
  }
  n_classes_ = y.n_classes;
  std::vector<double> sign(y.classes.size());
  for (std::size_t p = 0; p < binary_problems(n_classes_); ++p) {
    const int positive = positive_class(p, n_classes_);
    for (std::size_t i = 0; i < sign.size(); ++i) sign[i] = y.classes[i] == positive ? 1.0 : -1.0;
    Rng rng(derive_seed(seed_, p));
    coef_.push_back(averaged_sgd(Xs, lambda, epochs_, rng, [&](std::size_t i, double f) {
      return sign[i] * f < 1.0 ? sign[i] : 0.0;
    }));
  }
}

Matrix LinearSvm::predict_scores(const Matrix& X) const {
  const Matrix Xs = scaler_.transform(X);
  if (task_ == TaskType::Regression) {
    Matrix out(X.rows, 1);
    for (std::size_t r = 0; r < X.rows; ++r) out(r, 0) = y_mean_ + y_scale_ * linear_score(coef_[0], Xs.row(r));
    return out;
  }
  return ovr_scores(coef_, n_classes_, Xs, false);
}

void LinearSvm::save(BinaryWriter& out) const {
  out.put<std::uint8_t>(task_ == TaskType::Classification ? 0 : 1);
  out.put(C_);
  out.put<std::uint64_t>(n_classes_);
  out.put(y_mean_);
  out.put(y_scale_);
  save_scaler(out, scaler_);
  save_coefs(out, coef_);
}

void LinearSvm::load(BinaryReader& in) {
  task_ = in.get<std::uint8_t>() == 0 ? TaskType::Classification : TaskType::Regression;
  C_ = in.get<double>();
  n_classes_ = in.get<std::uint64_t>();
  y_mean_ = in.get<double>();
  y_scale_ = in.get<double>();
  scaler_ = load_scaler(in);
  coef_ = load_coefs(in);
  if (coef_.empty()) throw Error(ErrorKind::FormatError, "corrupt model");
}

// ---------------------------------------------------------------------------
// Elastic net

void ElasticNet::fit(const Matrix& X, const Target& y) {
  const std::size_t n = X.rows, d = X.cols;
  scaler_ = Standardizer::fit(X);
  const Matrix Xs = scaler_.transform(X);
  // Column-major copy for coordinate sweeps.
  std::vector<std::vector<double>> cols(d, std::vector<double>(n));
  std::vector<double> col_sq(d, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) cols[j][i] = Xs(i, j);
    for (double v : cols[j]) col_sq[j] += v * v;
    col_sq[j] *= inv_n;
  }
  const double y_mean = std::accumulate(y.values.begin(), y.values.end(), 0.0) * inv_n;
  std::vector<double> residual(n);
  for (std::size_t i = 0; i < n; ++i) residual[i] = y.values[i] - y_mean;

  w_.assign(d, 0.0);
  const double l1 = alpha_ * l1_ratio_;
  const double l2 = alpha_ * (1.0 - l1_ratio_);
  converged_ = false;
  for (std::size_t iter = 0; iter < 1000; ++iter) {
    double max_delta = 0, max_w = 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (col_sq[j] <= 0) continue;
      const auto& xj = cols[j];
      double rho = 0;
      for (std::size_t i = 0; i < n; ++i) rho += xj[i] * residual[i];
      rho = rho * inv_n + col_sq[j] * w_[j];
      const double shrunk = std::copysign(std::max(std::fabs(rho) - l1, 0.0), rho);
      const double w_new = shrunk / (col_sq[j] + l2);
      const double delta = w_new - w_[j];
      if (delta != 0.0) {
        for (std::size_t i = 0; i < n; ++i) residual[i] -= xj[i] * delta;
        w_[j] = w_new;
      }
      max_delta = std::max(max_delta, std::fabs(delta));
      max_w = std::max(max_w, std::fabs(w_new));
    }
    if (max_delta <= 1e-6 * std::max(1.0, max_w)) {
      converged_ = true;
      break;
    }
  }
  intercept_ = y_mean;
}

Matrix ElasticNet::predict_scores(const Matrix& X) const {
  Matrix out(X.rows, 1);
  const Matrix Xs = scaler_.transform(X);
  for (std::size_t r = 0; r < X.rows; ++r) out(r, 0) = intercept_ + dot(w_, Xs.row(r));
  return out;
}

std::vector<double> ElasticNet::coefficients() const {
  std::vector<double> out(w_.size() + 1);
  double shift = 0;
  for (std::size_t j = 0; j < w_.size(); ++j) {
    out[j] = w_[j] / scaler_.scale[j];
    shift += out[j] * scaler_.mean[j];
  }
  out.back() = intercept_ - shift;
  return out;
}

void ElasticNet::save(BinaryWriter& out) const {
  out.put(alpha_);
  out.put(l1_ratio_);
  save_scaler(out, scaler_);
  out.put_doubles(w_);
  out.put(intercept_);
}

void ElasticNet::load(BinaryReader& in) {
  alpha_ = in.get<double>();
  l1_ratio_ = in.get<double>();
  scaler_ = load_scaler(in);
  w_ = in.get_doubles();
  intercept_ = in.get<double>();
}

// ---------------------------------------------------------------------------
// k-nearest neighbors

void KNearestNeighbors::fit(const Matrix& X, const Target& y) {
  scaler_ = Standardizer::fit(X);
  train_ = scaler_.transform(X);
  y_ = y;
}

Matrix KNearestNeighbors::predict_scores(const Matrix& X) const {
  const Matrix Q = scaler_.transform(X);
  const std::size_t n = train_.rows;
  const std::size_t k = std::min(k_, n);
  const bool classification = task_ == TaskType::Classification;
  Matrix out(X.rows, classification ? std::max<std::size_t>(y_.n_classes, 2) : 1);
  std::vector<std::pair<double, std::size_t>> dist(n);
  std::vector<double> weight(k);
  for (std::size_t q = 0; q < Q.rows; ++q) {
    auto x = Q.row(q);
    for (std::size_t i = 0; i < n; ++i) {
      auto t = train_.row(i);
      double s = 0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double diff = x[j] - t[j];
        s += diff * diff;
      }
      dist[i] = {s, i};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());

    bool exact = false;
    for (std::size_t m = 0; m < k; ++m) exact = exact || dist[m].first == 0.0;
    double total = 0;
    for (std::size_t m = 0; m < k; ++m) {
      if (!distance_weighted_) weight[m] = 1.0;
      else if (exact) weight[m] = dist[m].first == 0.0 ? 1.0 : 0.0;
      else weight[m] = 1.0 / std::sqrt(dist[m].first);
      total += weight[m];
    }
    if (classification) {
      for (std::size_t m = 0; m < k; ++m) out(q, y_.classes[dist[m].second]) += weight[m] / total;
    } else {
      double acc = 0;
      for (std::size_t m = 0; m < k; ++m) acc += weight[m] * y_.values[dist[m].second];
      out(q, 0) = acc / total;
    }
  }
  return out;
}

void KNearestNeighbors::save(BinaryWriter& out) const {
  out.put<std::uint64_t>(k_);
  out.put<std::uint8_t>(distance_weighted_);
  out.put<std::uint8_t>(task_ == TaskType::Classification ? 0 : 1);
  save_scaler(out, scaler_);
  out.put<std::uint64_t>(train_.rows);
  out.put<std::uint64_t>(train_.cols);
  out.put_doubles(train_.data);
  out.put<std::uint64_t>(y_.n_classes);
  out.put<std::uint64_t>(y_.classes.size());
  for (int c : y_.classes) out.put<std::int32_t>(c);
  out.put_doubles(y_.values);
}

void KNearestNeighbors::load(BinaryReader& in) {
  k_ = in.get<std::uint64_t>();
  distance_weighted_ = in.get<std::uint8_t>() != 0;
  task_ = in.get<std::uint8_t>() == 0 ? TaskType::Classification : TaskType::Regression;
  scaler_ = load_scaler(in);
  train_.rows = in.get<std::uint64_t>();
  train_.cols = in.get<std::uint64_t>();
  train_.data = in.get_doubles();
  if (train_.data.size() != train_.rows * train_.cols) throw Error(ErrorKind::FormatError, "corrupt model");
  y_.task = task_;
  y_.n_classes = in.get<std::uint64_t>();
  y_.classes.resize(in.get<std::uint64_t>());
  for (int& c : y_.classes) c = in.get<std::int32_t>();
  y_.values = in.get_doubles();
}

// ---------------------------------------------------------------------------
// Trees

namespace {

Matrix tree_scores(const std::vector<Tree>& trees, std::size_t outputs, const Matrix& X) {
  Matrix out(X.rows, outputs);
  if (trees.empty()) return out;
  const double inv = 1.0 / static_cast<double>(trees.size());
  for (std::size_t r = 0; r < X.rows; ++r) {
    auto x = X.row(r);
    for (const auto& t : trees) {
      auto v = t.predict(x);
      for (std::size_t c = 0; c < outputs; ++c) out(r, c) += v[c];
    }
    for (std::size_t c = 0; c < outputs; ++c) out(r, c) *= inv;
  }
  return out;
}

void save_tree_options(BinaryWriter& out, const TreeOptions& o) {
  out.put<std::int64_t>(o.max_depth ? static_cast<std::int64_t>(*o.max_depth) : -1);
  out.put<std::uint64_t>(o.min_samples_split);
  out.put<std::uint64_t>(o.max_features);
}

TreeOptions load_tree_options(BinaryReader& in) {
  TreeOptions o;
  const auto depth = in.get<std::int64_t>();
  if (depth >= 0) o.max_depth = static_cast<std::size_t>(depth);
  o.min_samples_split = in.get<std::uint64_t>();
  o.max_features = in.get<std::uint64_t>();
  return o;
}

std::size_t output_width(const Target& y) {
  return y.task == TaskType::Classification ? std::max<std::size_t>(y.n_classes, 2) : 1;
}

}  // namespace

void DecisionTree::fit(const Matrix& X, const Target& y) {
  n_outputs_ = output_width(y);
  const SortedColumns sorted = SortedColumns::build(X);
  const std::vector<double> weights(X.rows, 1.0);
  Rng rng(derive_seed(seed_, 0));
  const bool cls = task_ == TaskType::Classification;
  tree_.fit(X, sorted, y.classes, cls ? n_outputs_ : 0, y.values, weights, options_, rng);
}

Matrix DecisionTree::predict_scores(const Matrix& X) const {
  Matrix out(X.rows, n_outputs_);
  for (std::size_t r = 0; r < X.rows; ++r) {
    auto v = tree_.predict(X.row(r));
    std::copy(v.begin(), v.end(), out.row(r).begin());
  }
  return out;
}

void DecisionTree::save(BinaryWriter& out) const {
  out.put<std::uint64_t>(n_outputs_);
  save_tree_options(out, options_);
  tree_.save(out);
}

void DecisionTree::load(BinaryReader& in) {
  n_outputs_ = in.get<std::uint64_t>();
  options_ = load_tree_options(in);
  tree_.load(in);
}

void RandomForest::fit(const Matrix& X, const Target& y) {
  n_outputs_ = output_width(y);
  const SortedColumns sorted = SortedColumns::build(X);
  const bool cls = task_ == TaskType::Classification;
  TreeOptions tree_options = options_.tree;
  tree_options.max_features =
      options_.max_features == "all" ? 0 : resolve_max_features(options_.max_features, X.cols);
  trees_.assign(options_.n_estimators, Tree{});
  std::vector<double> weights(X.rows);
  for (std::size_t t = 0; t < options_.n_estimators; ++t) {
    Rng rng(derive_seed(seed_, t));
    if (options_.bootstrap) {
      std::fill(weights.begin(), weights.end(), 0.0);
      for (std::size_t i = 0; i < X.rows; ++i) weights[rng.below(X.rows)] += 1.0;
    } else {
      std::fill(weights.begin(), weights.end(), 1.0);
    }
    trees_[t].fit(X, sorted, y.classes, cls ? n_outputs_ : 0, y.values, weights, tree_options, rng);
  }
}

Matrix RandomForest::predict_scores(const Matrix& X) const { return tree_scores(trees_, n_outputs_, X); }

void RandomForest::save(BinaryWriter& out) const {
  out.put<std::uint64_t>(n_outputs_);
  out.put<std::uint64_t>(trees_.size());
  for (const auto& t : trees_) t.save(out);
}

void RandomForest::load(BinaryReader& in) {
  n_outputs_ = in.get<std::uint64_t>();
  trees_.assign(in.get<std::uint64_t>(), Tree{});
  for (auto& t : trees_) t.load(in);
}

// ---------------------------------------------------------------------------
// Gradient boosting

void GradientBoosting::fit(const Matrix& X, const Target& y) {
  const std::size_t n = X.rows;
  const SortedColumns sorted = SortedColumns::build(X);
  const std::vector<double> weights(n, 1.0);
  TreeOptions options;
  options.max_depth = max_depth_;
  Rng unused(0);
  stages_.clear();
  stages_.reserve(n_estimators_);

  std::vector<double> residual(n);
  std::vector<std::size_t> leaf(n);
  auto fit_stage_tree = [&](Tree& tree) {
    tree.fit(X, sorted, {}, 0, residual, weights, options, unused);
    for (std::size_t i = 0; i < n; ++i) leaf[i] = tree.leaf_of(X.row(i));
  };

  if (task_ == TaskType::Regression) {
    n_classes_ = 0;
    const double mean = std::accumulate(y.values.begin(), y.values.end(), 0.0) / static_cast<double>(n);
    init_ = {mean};
    std::vector<double> F(n, mean);
    for (std::size_t m = 0; m < n_estimators_; ++m) {
      for (std::size_t i = 0; i < n; ++i) residual[i] = y.values[i] - F[i];
      std::vector<Tree> stage(1);
      fit_stage_tree(stage[0]);
      for (std::size_t i = 0; i < n; ++i) F[i] += learning_rate_ * stage[0].nodes()[leaf[i]].value[0];
      stages_.push_back(std::move(stage));
    }
    return;
  }

  n_classes_ = y.n_classes;
  const std::size_t K = n_classes_ <= 2 ? 1 : n_classes_;
  std::vector<double> prior(std::max<std::size_t>(n_classes_, 2), 0.0);
  for (int c : y.classes) prior[c] += 1.0;
  for (auto& p : prior) p = std::clamp(p / static_cast<double>(n), 1e-15, 1.0 - 1e-15);
  if (K == 1) {
    init_ = {std::log(prior[1] / (1.0 - prior[1]))};
  } else {
    init_.resize(K);
    for (std::size_t k = 0; k < K; ++k) init_[k] = std::log(prior[k]);
  }
  Matrix F(n, K);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < K; ++k) F(i, k) = init_[k];

  Matrix P(n, K);
  for (std::size_t m = 0; m < n_estimators_; ++m) {
    // Probabilities under the current model.
    for (std::size_t i = 0; i < n; ++i) {
      if (K == 1) {
        P(i, 0) = sigmoid(F(i, 0));
      } else {
        double mx = F(i, 0);
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, F(i, k));
        double z = 0;
        for (std::size_t k = 0; k < K; ++k) z += (P(i, k) = std::exp(F(i, k) - mx));
        for (std::size_t k = 0; k < K; ++k) P(i, k) /= z;
      }
    }
    std::vector<Tree> stage(K);
    for (std::size_t k = 0; k < K; ++k) {
      const int positive = K == 1 ? 1 : static_cast<int>(k);
      for (std::size_t i = 0; i < n; ++i) residual[i] = (y.classes[i] == positive ? 1.0 : 0.0) - P(i, k);
      fit_stage_tree(stage[k]);
      auto& nodes = stage[k].nodes();
      std::vector<double> num(nodes.size(), 0.0), den(nodes.size(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double r = residual[i];
        num[leaf[i]] += r;
        den[leaf[i]] += K == 1 ? P(i, 0) * (1.0 - P(i, 0)) : std::fabs(r) * (1.0 - std::fabs(r));
      }
      const double factor = K == 1 ? 1.0 : static_cast<double>(K - 1) / static_cast<double>(K);
      for (std::size_t node = 0; node < nodes.size(); ++node) {
        if (nodes[node].feature >= 0) continue;
        nodes[node].value = {den[node] > 1e-150 ? factor * num[node] / den[node] : 0.0};
      }
      for (std::size_t i = 0; i < n; ++i) F(i, k) += learning_rate_ * nodes[leaf[i]].value[0];
    }
    stages_.push_back(std::move(stage));
  }
}

Matrix GradientBoosting::raw_scores(const Matrix& X) const {
  const std::size_t K = init_.size();
  Matrix F(X.rows, K);
  for (std::size_t r = 0; r < X.rows; ++r) {
    auto x = X.row(r);
    for (std::size_t k = 0; k < K; ++k) {
      double acc = init_[k];
      for (const auto& stage : stages_) acc += learning_rate_ * stage[k].predict(x)[0];
      F(r, k) = acc;
    }
  }
  return F;
}

Matrix GradientBoosting::predict_scores(const Matrix& X) const {
  Matrix F = raw_scores(X);
  if (task_ == TaskType::Regression) return F;
  if (F.cols == 1) {
    Matrix out(X.rows, 2);
    for (std::size_t r = 0; r < X.rows; ++r) {
      const double p = sigmoid(F(r, 0));
      out(r, 0) = 1.0 - p;
      out(r, 1) = p;
    }
    return out;
  }
  for (std::size_t r = 0; r < F.rows; ++r) {
    auto row = F.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0;
    for (double& v : row) z += (v = std::exp(v - mx));
    for (double& v : row) v /= z;
  }
  return F;
}

void GradientBoosting::save(BinaryWriter& out) const {
  out.put<std::uint8_t>(task_ == TaskType::Classification ? 0 : 1);
  out.put(learning_rate_);
  out.put<std::uint64_t>(n_classes_);
  out.put_doubles(init_);
  out.put<std::uint64_t>(stages_.size());
  for (const auto& stage : stages_)
    for (const auto& t : stage) t.save(out);
}

void GradientBoosting::load(BinaryReader& in) {
  task_ = in.get<std::uint8_t>() == 0 ? TaskType::Classification : TaskType::Regression;
  learning_rate_ = in.get<double>();
  n_classes_ = in.get<std::uint64_t>();
  init_ = in.get_doubles();
  if (init_.empty()) throw Error(ErrorKind::FormatError, "corrupt model");
  stages_.assign(in.get<std::uint64_t>(), std::vector<Tree>(init_.size()));
  for (auto& stage : stages_)
    for (auto& t : stage) t.load(in);
  n_estimators_ = stages_.size();
}

// ---------------------------------------------------------------------------

std::unique_ptr<Model> make_model(TaskType task, const ParamConfig& raw_config, std::uint64_t seed) {
  const ParamConfig config = validate_config(task, raw_config);
  const auto& v = config.values;
  const std::string& a = config.algorithm;
  if (a == "logistic_regression") return std::make_unique<LogisticRegression>(v.at("C").get<double>());
  if (a == "elastic_net")
    return std::make_unique<ElasticNet>(v.at("alpha").get<double>(), v.at("l1_ratio").get<double>());
  if (a == "svm") return std::make_unique<LinearSvm>(task, v.at("C").get<double>(), seed);
  if (a == "knn")
    return std::make_unique<KNearestNeighbors>(task, v.at("k").get<std::size_t>(),
                                               v.at("weights").get<std::string>() == "distance");
  if (a == "decision_tree") {
    TreeOptions o;
    if (!v.at("max_depth").is_null()) o.max_depth = v.at("max_depth").get<std::size_t>();
    o.min_samples_split = v.at("min_samples_split").get<std::size_t>();
    return std::make_unique<DecisionTree>(task, o, seed);
  }
  if (a == "random_forest") {
    ForestOptions o;
    o.n_estimators = v.at("n_estimators").get<std::size_t>();
    o.max_features = v.at("max_features").get<std::string>();
    return std::make_unique<RandomForest>(task, o, seed);
  }
  if (a == "gradient_boosting")
    return std::make_unique<GradientBoosting>(task, v.at("n_estimators").get<std::size_t>(),
                                              v.at("learning_rate").get<double>());
  throw Error(ErrorKind::UnknownAlgorithm, "unknown algorithm '" + a + "'");
}

}  // namespace autolab::ml
