#include "autolab/ml/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace autolab::ml {

SortedColumns SortedColumns::build(const Matrix& X) {
  SortedColumns s;
  s.order.resize(X.cols);
  for (std::size_t f = 0; f < X.cols; ++f) {
    auto& o = s.order[f];
    o.resize(X.rows);
    std::iota(o.begin(), o.end(), 0u);
    std::stable_sort(o.begin(), o.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
  }
  return s;
}

std::size_t resolve_max_features(std::string_view rule, std::size_t n_features) {
  if (n_features == 0) return 0;
  double m = static_cast<double>(n_features);
  if (rule == "sqrt") m = std::sqrt(m);
  else if (rule == "log2") m = std::log2(m);
  return std::max<std::size_t>(1, static_cast<std::size_t>(m));
}

namespace {

class Builder {
 public:
  Builder(const Matrix& X, std::span<const int> classes, std::size_t n_classes,
          std::span<const double> values, std::span<const double> weights,
          const TreeOptions& options, Rng& rng, std::vector<TreeNode>& nodes)
      : X_(X), classes_(classes), k_(n_classes), values_(values), weights_(weights),
        options_(options), rng_(rng), nodes_(nodes), goes_left_(X.rows, 0) {}

  void run(const SortedColumns& sorted) {
    const std::size_t d = X_.cols;
    segments_.resize(std::max<std::size_t>(d, 1));
    if (d == 0) {
      // No features: a single leaf over all weighted rows.
      for (std::uint32_t r = 0; r < X_.rows; ++r)
        if (weights_[r] > 0) segments_[0].push_back(r);
    } else {
      for (std::size_t f = 0; f < d; ++f) {
        auto& seg = segments_[f];
        seg.reserve(X_.rows);
        for (std::uint32_t r : sorted.order[f])
          if (weights_[r] > 0) seg.push_back(r);
      }
    }
    buffer_.resize(segments_[0].size());
    build(0, segments_[0].size(), 0);
  }

 private:
  struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0;
    double gain = 0;
  };

  bool classification() const { return k_ > 0; }

  int build(std::size_t begin, std::size_t end, std::size_t depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();

    // Node statistics.
    const auto& rows = segments_[0];
    double total_w = 0, sum = 0, sum_sq = 0;
    std::vector<double> counts(k_, 0.0);
    double y_min = INFINITY, y_max = -INFINITY;
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows[i];
      const double w = weights_[r];
      total_w += w;
      if (classification()) {
        counts[classes_[r]] += w;
      } else {
        sum += w * values_[r];
        sum_sq += w * values_[r] * values_[r];
        y_min = std::min(y_min, values_[r]);
        y_max = std::max(y_max, values_[r]);
      }
    }
    TreeNode node;
    if (classification()) {
      node.value.resize(k_);
      for (std::size_t c = 0; c < k_; ++c) node.value[c] = total_w > 0 ? counts[c] / total_w : 0.0;
    } else {
      node.value = {total_w > 0 ? sum / total_w : 0.0};
    }

    bool pure;
    double parent_proxy, scale;
    if (classification()) {
      const double top = counts.empty() ? 0.0 : *std::max_element(counts.begin(), counts.end());
      pure = top >= total_w;
      parent_proxy = 0;
      for (double c : counts) parent_proxy += c * c;
      parent_proxy /= total_w;
      scale = total_w;
    } else {
      pure = !(y_max > y_min);
      parent_proxy = sum * sum / total_w;
      scale = sum_sq;
    }

    const bool depth_ok = !options_.max_depth || depth < *options_.max_depth;
    if (pure || !depth_ok || total_w < static_cast<double>(options_.min_samples_split) ||
        end - begin < 2 || X_.cols == 0) {
      nodes_[id] = std::move(node);
      return id;
    }

    Split best = find_split(begin, end, total_w, counts, sum, parent_proxy);
    if (!best.found || !(best.gain > 1e-12 * scale)) {
      nodes_[id] = std::move(node);
      return id;
    }

    // Partition every feature's segment, preserving sorted order.
    std::size_t n_left = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto r = rows[i];
      const bool left = X_(r, best.feature) <= best.threshold;
      goes_left_[r] = left;
      n_left += left;
    }
    for (auto& seg : segments_) {
      std::size_t li = begin, ri = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = seg[i];
        if (goes_left_[r])
          seg[li++] = r;
        else
          buffer_[ri++] = r;
      }
      std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(ri),
                seg.begin() + static_cast<std::ptrdiff_t>(li));
    }

    node.feature = static_cast<int>(best.feature);
    node.threshold = best.threshold;
    nodes_[id] = std::move(node);
    const int left = build(begin, begin + n_left, depth + 1);
    const int right = build(begin + n_left, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  std::vector<std::size_t> candidate_features() {
    const std::size_t d = X_.cols;
    std::vector<std::size_t> features(d);
    std::iota(features.begin(), features.end(), 0);
    const std::size_t m = options_.max_features;
    if (m == 0 || m >= d) return features;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_.below(d - i));
      std::swap(features[i], features[j]);
    }
    features.resize(m);
    std::sort(features.begin(), features.end());
    return features;
  }

  Split find_split(std::size_t begin, std::size_t end, double total_w,
                   const std::vector<double>& counts, double sum, double parent_proxy) {
    Split best;
    std::vector<double> left_counts(k_);
    for (std::size_t f : candidate_features()) {
      const auto& seg = segments_[f];
      double wl = 0, sl = 0;
      double left_sq = 0;  // sum of squared left class weights
      std::fill(left_counts.begin(), left_counts.end(), 0.0);
      for (std::size_t i = begin; i + 1 < end; ++i) {
        const auto r = seg[i];
        const double w = weights_[r];
        wl += w;
        if (classification()) {
          double& c = left_counts[classes_[r]];
          left_sq += (2 * c + w) * w;
          c += w;
        } else {
          sl += w * values_[r];
        }
        const double x = X_(r, f);
        const double x_next = X_(seg[i + 1], f);
        if (!(x < x_next)) continue;
        const double wr = total_w - wl;
        double proxy;
        if (classification()) {
          double right_sq = 0;
          for (std::size_t c = 0; c < k_; ++c) {
            const double rc = counts[c] - left_counts[c];
            right_sq += rc * rc;
          }
          proxy = left_sq / wl + right_sq / wr;
        } else {
          const double sr = sum - sl;
          proxy = sl * sl / wl + sr * sr / wr;
        }
        const double gain = proxy - parent_proxy;
        if (!best.found || gain > best.gain) {
          double threshold = x + (x_next - x) / 2;
          if (!(threshold < x_next)) threshold = x;
          best = {true, f, threshold, gain};
        }
      }
    }
    return best;
  }

  const Matrix& X_;
  std::span<const int> classes_;
  std::size_t k_;
  std::span<const double> values_;
  std::span<const double> weights_;
  const TreeOptions& options_;
  Rng& rng_;
  std::vector<TreeNode>& nodes_;
  std::vector<std::vector<std::uint32_t>> segments_;
  std::vector<std::uint32_t> buffer_;
  std::vector<char> goes_left_;
};

}  // namespace

void Tree::fit(const Matrix& X, const SortedColumns& sorted, std::span<const int> classes,
               std::size_t n_classes, std::span<const double> values,
               std::span<const double> weights, const TreeOptions& options, Rng& rng) {
  nodes_.clear();
  Builder builder(X, classes, n_classes, values, weights, options, rng, nodes_);
  builder.run(sorted);
}

std::size_t Tree::leaf_of(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const auto& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return i;
}

void Tree::save(BinaryWriter& out) const {
  out.put<std::uint64_t>(nodes_.size());
  for (const auto& n : nodes_) {
    out.put<std::int32_t>(n.feature);
    out.put(n.threshold);
    out.put<std::int32_t>(n.left);
    out.put<std::int32_t>(n.right);
    out.put_doubles(n.value);
  }
}

void Tree::load(BinaryReader& in) {
  const auto n = in.get<std::uint64_t>();
  nodes_.assign(n, {});
  for (auto& node : nodes_) {
    node.feature = in.get<std::int32_t>();
    node.threshold = in.get<double>();
    node.left = in.get<std::int32_t>();
    node.right = in.get<std::int32_t>();
    node.value = in.get_doubles();
    const auto limit = static_cast<std::int32_t>(n);
    if (node.feature >= 0 && (node.left <= 0 || node.right <= 0 || node.left >= limit || node.right >= limit))
      throw Error(ErrorKind::FormatError, "corrupt tree node");
  }
  if (nodes_.empty()) throw Error(ErrorKind::FormatError, "empty tree");
}

bool Tree::operator==(const Tree& other) const {
  if (nodes_.size() != other.nodes_.size()) return false;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& a = nodes_[i];
    const auto& b = other.nodes_[i];
    if (a.feature != b.feature || a.threshold != b.threshold || a.left != b.left ||
        a.right != b.right || a.value != b.value)
      return false;
  }
  return true;
}

}  // namespace autolab::ml
