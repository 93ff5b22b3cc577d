#include "autolab/ml/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace autolab::ml {

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    auto src = row(idx[i]);
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  return out;
}

Target Target::select(std::span<const std::size_t> idx) const {
  Target out;
  out.task = task;
  out.n_classes = n_classes;
  if (task == TaskType::Classification) {
    out.classes.reserve(idx.size());
    for (auto i : idx) out.classes.push_back(classes[i]);
  } else {
    out.values.reserve(idx.size());
    for (auto i : idx) out.values.push_back(values[i]);
  }
  return out;
}

std::size_t FeatureEncoding::width() const {
  std::size_t w = 0;
  for (const auto& s : sources) w += s.kind == ColumnKind::Numeric ? 1 : s.categories.size();
  return w;
}

Matrix FeatureEncoding::encode(const Table& table) const {
  Matrix X(table.n_rows, width());
  std::size_t offset = 0;
  for (const auto& src : sources) {
    const Column& col = table.column(src.column);
    if (src.kind == ColumnKind::Numeric) {
      if (col.kind != ColumnKind::Numeric)
        throw Error(ErrorKind::InvariantViolation, "column '" + src.column + "' is not numeric");
      for (std::size_t r = 0; r < table.n_rows; ++r) X(r, offset) = col.numeric[r];
      ++offset;
      continue;
    }
    std::map<std::string_view, std::size_t> slot;
    for (std::size_t k = 0; k < src.categories.size(); ++k) slot[src.categories[k]] = k;
    for (std::size_t r = 0; r < table.n_rows; ++r) {
      // Unseen categories encode as all zeros.
      auto it = slot.find(col.categorical[r]);
      if (it != slot.end()) X(r, offset + it->second) = 1.0;
    }
    offset += src.categories.size();
  }
  return X;
}

DesignData encode_dataset(const Table& table, const std::string& target_column, TaskType task) {
  DesignData out;
  for (const auto& col : table.columns) {
    if (col.name == target_column) continue;
    FeatureEncoding::Source src{col.name, col.kind, {}};
    if (col.kind == ColumnKind::Categorical) {
      std::set<std::string> cats(col.categorical.begin(), col.categorical.end());
      src.categories.assign(cats.begin(), cats.end());
    }
    out.encoding.sources.push_back(std::move(src));
  }
  out.X = out.encoding.encode(table);

  const Column& t = table.column(target_column);
  out.y.task = task;
  if (task == TaskType::Classification) {
    out.encoding.class_names = class_labels(t);
    std::map<std::string, int> index;
    for (std::size_t k = 0; k < out.encoding.class_names.size(); ++k)
      index[out.encoding.class_names[k]] = static_cast<int>(k);
    out.y.n_classes = out.encoding.class_names.size();
    out.y.classes.reserve(table.n_rows);
    for (std::size_t r = 0; r < table.n_rows; ++r) out.y.classes.push_back(index.at(t.categorical[r]));
  } else {
    out.y.values = t.numeric;
  }
  return out;
}

Standardizer Standardizer::fit(const Matrix& X) {
  Standardizer s;
  s.mean.assign(X.cols, 0.0);
  s.scale.assign(X.cols, 1.0);
  if (X.rows == 0) return s;
  const double n = static_cast<double>(X.rows);
  for (std::size_t r = 0; r < X.rows; ++r)
    for (std::size_t c = 0; c < X.cols; ++c) s.mean[c] += X(r, c);
  for (auto& m : s.mean) m /= n;
  std::vector<double> var(X.cols, 0.0);
  for (std::size_t r = 0; r < X.rows; ++r)
    for (std::size_t c = 0; c < X.cols; ++c) {
      const double d = X(r, c) - s.mean[c];
      var[c] += d * d;
    }
  for (std::size_t c = 0; c < X.cols; ++c) {
    const double sd = std::sqrt(var[c] / n);
    s.scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Matrix Standardizer::transform(const Matrix& X) const {
  Matrix out = X;
  for (std::size_t r = 0; r < X.rows; ++r)
    for (std::size_t c = 0; c < X.cols; ++c) out(r, c) = (X(r, c) - mean[c]) / scale[c];
  return out;
}

}  // namespace autolab::ml
