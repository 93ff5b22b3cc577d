#pragma once

// Deterministic dataset generators shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "autolab/common.hpp"
#include "autolab/dataset.hpp"
#include "autolab/ml/matrix.hpp"

namespace autolab::testing {

inline std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// Two Gaussian classes (unit variance) whose centers are `separation`
/// standard deviations apart along the diagonal; alternating labels.
inline std::string blobs_csv(std::size_t n, double separation, std::uint64_t seed, std::size_t dims = 2) {
  Rng rng(seed);
  std::ostringstream os;
  for (std::size_t j = 0; j < dims; ++j) os << "x" << j << ",";
  os << "label\n";
  const double offset = separation / std::sqrt(static_cast<double>(dims));
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    for (std::size_t j = 0; j < dims; ++j) os << fmt_double(rng.normal() + label * offset) << ",";
    os << (label ? "pos" : "neg") << "\n";
  }
  return os.str();
}

/// y = sum_j w_j x_j + noise with noise stddev = noise_ratio * stddev(signal).
inline std::string linear_csv(std::size_t n, std::size_t dims, double noise_ratio, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(dims);
  for (std::size_t j = 0; j < dims; ++j) w[j] = (j % 2 ? -1.0 : 1.0) * (1.0 + static_cast<double>(j));
  double signal_var = 0;
  for (double v : w) signal_var += v * v;  // features are standard normal
  const double noise_sd = noise_ratio * std::sqrt(signal_var);
  std::ostringstream os;
  for (std::size_t j = 0; j < dims; ++j) os << "x" << j << ",";
  os << "y\n";
  for (std::size_t i = 0; i < n; ++i) {
    double y = 0;
    for (std::size_t j = 0; j < dims; ++j) {
      const double x = rng.normal();
      y += w[j] * x;
      os << fmt_double(x) << ",";
    }
    os << fmt_double(y + noise_sd * rng.normal()) << "\n";
  }
  return os.str();
}

inline PreparedDataset prepare(const std::string& csv, const std::string& target, TaskType task,
                               const std::string& name = "fixture") {
  return prepare_dataset(csv, name, target, task, {}, 0);
}

inline ml::DesignData design(const PreparedDataset& p) {
  return ml::encode_dataset(p.table, p.record.target_column, p.record.task_type);
}

}  // namespace autolab::testing
