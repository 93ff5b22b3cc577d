#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "autolab/dataset.hpp"

namespace autolab::ml {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  Matrix select_rows(std::span<const std::size_t> idx) const;

  bool operator==(const Matrix&) const = default;
};

/// Supervised targets in model-ready form.
struct Target {
  TaskType task = TaskType::Classification;
  /// Class index per row (classification).
  std::vector<int> classes;
  std::size_t n_classes = 0;
  /// Real target per row (regression).
  std::vector<double> values;

  std::size_t size() const { return task == TaskType::Classification ? classes.size() : values.size(); }
  Target select(std::span<const std::size_t> idx) const;
};

/// How table columns map onto design-matrix columns. Categorical columns are
/// one-hot encoded over the categories seen in the full table.
struct FeatureEncoding {
  struct Source {
    std::string column;
    ColumnKind kind = ColumnKind::Numeric;
    std::vector<std::string> categories;
  };
  std::vector<Source> sources;
  std::vector<std::string> class_names;

  std::size_t width() const;
  Matrix encode(const Table& table) const;
};

struct DesignData {
  Matrix X;
  Target y;
  FeatureEncoding encoding;
};

DesignData encode_dataset(const Table& table, const std::string& target_column, TaskType task);

/// Per-column mean/stddev scaler; zero-variance columns keep unit scale.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& X);
  Matrix transform(const Matrix& X) const;
};

}  // namespace autolab::ml
