#include <gtest/gtest.h>

#include <cmath>

#include "autolab/ml/metrics.hpp"

namespace autolab::ml {
namespace {

// Independent oracle: probability that a random positive outscores a random
// negative, ties counted one half, by exhaustive pair enumeration.
double brute_force_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::uint64_t twice = 0, pos = 0, neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? pos : neg)++;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) twice += 2;
      else if (scores[i] == scores[j]) twice += 1;
    }
  }
  return static_cast<double>(twice) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double trapezoid(const RocCurve& c) {
  double area = 0;
  for (std::size_t i = 1; i < c.points.size(); ++i)
    area += (c.points[i].first - c.points[i - 1].first) * (c.points[i].second + c.points[i - 1].second) / 2;
  return area;
}

TEST(Roc, PerfectSeparation) {
  auto c = compute_roc(std::vector<double>{0.9, 0.8, 0.3, 0.1}, std::vector<int>{1, 1, 0, 0});
  EXPECT_EQ(c.auc, 1.0);
  EXPECT_EQ(c.points.front(), std::make_pair(0.0, 0.0));
  EXPECT_EQ(c.points.back(), std::make_pair(1.0, 1.0));
}

TEST(Roc, AllTiedScoresGiveOneHalf) {
  auto c = compute_roc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1, 0});
  EXPECT_EQ(c.auc, 0.5);
  ASSERT_EQ(c.points.size(), 2u);  // one point for the single distinct score
}

TEST(Roc, HandCountedConcordance) {
  // Pairs (positive, negative): (0.8,0.4) (0.8,0.6) concordant, (0.2,0.4) (0.2,0.6) not: 2 of 4.
  auto c = compute_roc(std::vector<double>{0.8, 0.4, 0.6, 0.2}, std::vector<int>{1, 0, 0, 1});
  EXPECT_EQ(c.auc, 0.5);
}

TEST(Roc, SingleClassIsAnError) {
  try {
    compute_roc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SingleClass);
  }
  EXPECT_THROW(compute_roc(std::vector<double>{0.1}, std::vector<int>{1, 0}), Error);
}

// Property: AUC equals the exhaustive concordance statistic exactly, and the
// curve is monotone with its trapezoid area equal to the AUC.
TEST(RocProperty, MatchesBruteForceConcordance) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    const std::uint64_t levels = 1 + rng.below(20);  // coarse scores force ties
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.below(2));
      scores[i] = seed % 2 ? static_cast<double>(rng.below(levels)) / static_cast<double>(levels)
                           : rng.normal() + labels[i];
    }
    labels[0] = 1;
    labels[1] = 0;
    auto c = compute_roc(scores, labels);
    EXPECT_EQ(c.auc, brute_force_auc(scores, labels)) << "seed " << seed;
    EXPECT_NEAR(trapezoid(c), c.auc, 1e-12);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      EXPECT_GE(c.points[i].first, c.points[i - 1].first);
      EXPECT_GE(c.points[i].second, c.points[i - 1].second);
    }
    EXPECT_EQ(c.points.back(), std::make_pair(1.0, 1.0));
  }
}

// Property: swapping the positive class and negating scores keeps AUC.
TEST(RocProperty, RelabelingInvariance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 7);
    std::vector<double> scores(40), negated(40);
    std::vector<int> labels(40), swapped(40);
    for (std::size_t i = 0; i < 40; ++i) {
      labels[i] = static_cast<int>(i % 2);
      scores[i] = rng.normal() + labels[i];
      negated[i] = -scores[i];
      swapped[i] = 1 - labels[i];
    }
    EXPECT_EQ(roc_auc(scores, labels), roc_auc(negated, swapped));
  }
}

TEST(ClassificationMetrics, IdenticalPredictions) {
  std::vector<int> t{0, 1, 2, 1, 0};
  auto m = classification_metrics(t, t);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.balanced_accuracy, 1.0);
  EXPECT_EQ(m.f1_macro, 1.0);
}

TEST(ClassificationMetrics, AllOnePrediction) {
  // Recall is 1.0 for class 1 and 0.0 for class 0.
  auto m = classification_metrics(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 1, 1, 1});
  EXPECT_EQ(m.accuracy, 0.5);
  EXPECT_EQ(m.balanced_accuracy, 0.5);
  // F1: class 1 precision 0.5, recall 1 -> 2/3; class 0 -> 0.
  EXPECT_DOUBLE_EQ(*m.f1_macro, (2.0 / 3.0) / 2.0);
}

TEST(ClassificationMetrics, AucComesFromScoresNotLabels) {
  Matrix scores(4, 2);
  const double p1[] = {0.9, 0.6, 0.4, 0.45};
  for (int i = 0; i < 4; ++i) {
    scores(i, 1) = p1[i];
    scores(i, 0) = 1 - p1[i];
  }
  std::vector<int> truth{1, 1, 0, 0};
  auto m = classification_metrics(truth, argmax_rows(scores), scores);
  EXPECT_EQ(m.auc, 1.0);
  EXPECT_EQ(m.accuracy, 1.0);
}

TEST(ClassificationMetrics, LengthMismatch) {
  try {
    classification_metrics(std::vector<int>{1, 0}, std::vector<int>{1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LengthMismatch);
  }
}

TEST(ClassificationMetricsProperty, RelabelingInvariance) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 30;
    std::vector<int> truth(n), pred(n), truth_s(n), pred_s(n);
    Matrix scores(n, 2), swapped(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(i % 2);
      const double p = rng.uniform();
      scores(i, 1) = p;
      scores(i, 0) = 1 - p;
      swapped(i, 0) = p;
      swapped(i, 1) = 1 - p;
      pred[i] = p >= 0.5;
      truth_s[i] = 1 - truth[i];
      pred_s[i] = 1 - pred[i];
    }
    auto a = classification_metrics(truth, pred, scores);
    auto b = classification_metrics(truth_s, pred_s, swapped);
    EXPECT_EQ(a.accuracy, b.accuracy);
    EXPECT_DOUBLE_EQ(*a.balanced_accuracy, *b.balanced_accuracy);
    EXPECT_DOUBLE_EQ(*a.f1_macro, *b.f1_macro);
    EXPECT_EQ(a.auc, b.auc);
  }
}

TEST(RegressionMetrics, MeanPredictorHasZeroR2) {
  std::vector<double> truth{1.0, 2.0, 4.0, 9.0};
  const double mean = (1.0 + 2.0 + 4.0 + 9.0) / 4.0;
  auto m = regression_metrics(truth, std::vector<double>(4, mean));
  EXPECT_EQ(m.r2, 0.0);
  EXPECT_DOUBLE_EQ(*m.mse, ((1 - 4) * (1 - 4) + (2 - 4) * (2 - 4) + 0.0 + 25.0) / 4.0);
}

TEST(RegressionMetrics, PerfectPrediction) {
  std::vector<double> truth{1.0, 2.0, 3.0};
  auto m = regression_metrics(truth, truth);
  EXPECT_EQ(m.r2, 1.0);
  EXPECT_EQ(m.mse, 0.0);
}

TEST(Metrics, LookupByName) {
  Metrics m;
  m.accuracy = 0.75;
  EXPECT_EQ(m.get("accuracy"), 0.75);
  EXPECT_FALSE(m.get("r2").has_value());
  EXPECT_THROW(m.get("precision"), Error);
  EXPECT_FALSE(higher_is_better("mse"));
  EXPECT_TRUE(higher_is_better("auc"));
}

TEST(Metrics, MeanOverFolds) {
  std::vector<Metrics> folds(2);
  folds[0].accuracy = 0.5;
  folds[1].accuracy = 1.0;
  folds[0].auc = 0.5;  // missing from fold 1, so dropped
  auto m = mean_metrics(folds);
  EXPECT_EQ(m.accuracy, 0.75);
  EXPECT_FALSE(m.auc.has_value());
}

}  // namespace
}  // namespace autolab::ml
