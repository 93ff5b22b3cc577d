#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "autolab/dataset.hpp"
#include "fixtures.hpp"

namespace autolab {
namespace {

using testing::fmt_double;

std::string numeric_csv(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::ostringstream os;
  for (std::size_t c = 0; c < cols; ++c) os << (c ? "," : "") << "c" << c;
  os << "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c + 1 < cols; ++c) os << fmt_double(rng.normal()) << ",";
    os << (r % 2) << "\n";
  }
  return os.str();
}

TEST(Ingest, CountsRowsAndFeatures) {
  auto p = testing::prepare(numeric_csv(100, 5, 1), "c4", TaskType::Classification);
  EXPECT_EQ(p.record.n_rows, 100u);
  EXPECT_EQ(p.record.meta_features.n_features, 4.0);
  EXPECT_EQ(p.record.columns.size(), 5u);
  EXPECT_EQ(p.record.id.size(), 64u);
}

TEST(Ingest, ConstantClassificationTargetIsRejected) {
  std::string csv = "a,b\n1.5,x\n2.5,x\n3.5,x\n";
  try {
    testing::prepare(csv, "b", TaskType::Classification);
    FAIL() << "expected TargetError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TargetError);
  }
}

TEST(Ingest, SameBytesSameId) {
  const auto csv = numeric_csv(20, 3, 7);
  auto a = prepare_dataset(csv, "first", "c2", TaskType::Classification, {"x"}, 1);
  auto b = prepare_dataset(csv, "second", "c2", TaskType::Classification, {"y"}, 2);
  EXPECT_EQ(a.record.id, b.record.id);
}

TEST(Ingest, CanonicalizationIgnoresWhitespaceAndLineEndings) {
  auto a = testing::prepare("a,b\n1,x\n2,y\n", "b", TaskType::Classification);
  auto b = testing::prepare(" a , b \r\n1 ,x\r\n 2,y  \r\n\r\n", "b", TaskType::Classification);
  EXPECT_EQ(a.record.id, b.record.id);
  EXPECT_EQ(a.canonical_csv, b.canonical_csv);
}

TEST(Ingest, ErrorsForMalformedInput) {
  auto kind_of = [](const std::string& csv, const std::string& target) {
    try {
      testing::prepare(csv, target, TaskType::Classification);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Validation;
  };
  EXPECT_EQ(kind_of("a,b\n1,2\n3\n", "b"), ErrorKind::ParseError);
  EXPECT_EQ(kind_of("a,b\n", "b"), ErrorKind::EmptyDataset);
  EXPECT_EQ(kind_of("a,b\n1,2\n3,4\n", "zzz"), ErrorKind::TargetError);
  EXPECT_EQ(kind_of("a,b\n1,\"unterminated\n", "b"), ErrorKind::ParseError);
  EXPECT_EQ(kind_of("", "b"), ErrorKind::ParseError);
}

TEST(Ingest, RowLimitGuard) {
  IngestOptions opts;
  opts.row_limit = 10;
  EXPECT_THROW(prepare_dataset(numeric_csv(11, 2, 1), "n", "c1", TaskType::Classification, {}, 0, opts),
               Error);
  EXPECT_NO_THROW(prepare_dataset(numeric_csv(10, 2, 1), "n", "c1", TaskType::Classification, {}, 0, opts));
}

TEST(Ingest, TabDelimiterAndQuotedCells) {
  auto p = testing::prepare("a\tb\tlabel\n1.5\t\"x, y\"\tA\n2.5\tz\tB\n", "label",
                            TaskType::Classification);
  EXPECT_EQ(p.table.column("b").categorical[0], "x, y");
  EXPECT_EQ(p.table.column("a").numeric[1], 2.5);
}

TEST(Ingest, MissingValuesAreImputedAndMissingTargetsDropped) {
  std::string csv =
      "num,cat,y\n"
      "1.5,red,1.0\n"
      ",blue,2.0\n"
      "4.5,,3.0\n"
      "10.5,red,4.0\n"
      "2.5,red,NA\n";
  auto p = testing::prepare(csv, "y", TaskType::Regression);
  EXPECT_EQ(p.record.n_rows, 4u);
  // Median of {1.5, 4.5, 10.5}.
  EXPECT_EQ(p.table.column("num").numeric[1], 4.5);
  // Mode of {red, blue, red}.
  EXPECT_EQ(p.table.column("cat").categorical[2], "red");
  EXPECT_EQ(p.table.column("cat").kind, ColumnKind::Categorical);
  EXPECT_EQ(p.table.column("y").kind, ColumnKind::Numeric);
}

TEST(Ingest, SmallIntegerColumnsAreCategoricalExceptRegressionTarget) {
  std::string csv = "level,score,y\n1,0.5,1\n2,1.5,2\n3,2.5,3\n1,3.5,2\n";
  auto p = testing::prepare(csv, "y", TaskType::Regression);
  EXPECT_EQ(p.table.column("level").kind, ColumnKind::Categorical);
  EXPECT_EQ(p.table.column("score").kind, ColumnKind::Numeric);
  EXPECT_EQ(p.table.column("y").kind, ColumnKind::Numeric);

  IngestOptions opts;
  opts.force_numeric = {"level"};
  auto q = prepare_dataset(csv, "n", "y", TaskType::Regression, {}, 0, opts);
  EXPECT_EQ(q.table.column("level").kind, ColumnKind::Numeric);
}

TEST(Ingest, NonNumericRegressionTargetIsRejected) {
  EXPECT_THROW(testing::prepare("a,y\n1.5,low\n2.5,high\n", "y", TaskType::Regression), Error);
}

TEST(Ingest, TagsAreNormalized) {
  EXPECT_EQ(normalize_tags({" Prostate", "prostate", "", "CANCER "}),
            (std::set<std::string>{"cancer", "prostate"}));
}

TEST(Ingest, LoadTableRebuildsIdenticalTable) {
  std::string csv = "num,cat,y\n1.5,red,a\n,blue,b\n4.5,,a\n10.5,red,b\n";
  auto p = testing::prepare(csv, "y", TaskType::Classification);
  Table t = load_table(p.canonical_csv, p.record);
  ASSERT_EQ(t.columns.size(), p.table.columns.size());
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    EXPECT_EQ(t.columns[c].numeric, p.table.columns[c].numeric);
    EXPECT_EQ(t.columns[c].categorical, p.table.columns[c].categorical);
  }
}

TEST(Ingest, RecordJsonRoundTrip) {
  auto p = prepare_dataset(numeric_csv(30, 4, 3), "ds", "c3", TaskType::Classification, {"a", "b"}, 99);
  nlohmann::json j = p.record;
  EXPECT_EQ(j.get<DatasetRecord>(), p.record);
}

// ---------------------------------------------------------------------------
// Meta-features

TEST(MetaFeatures, BalancedBinaryTargetHasUnitImbalance) {
  auto p = testing::prepare(numeric_csv(50, 3, 2), "c2", TaskType::Classification);
  EXPECT_EQ(p.record.meta_features.imbalance_ratio, 1.0);
  EXPECT_EQ(p.record.meta_features.n_classes, 2.0);
}

TEST(MetaFeatures, CopiedFeatureGivesPerfectCorrelation) {
  Rng rng(5);
  std::ostringstream os;
  os << "a,b,y\n";
  for (int i = 0; i < 40; ++i) {
    const double v = rng.normal();
    os << fmt_double(v) << "," << fmt_double(v) << "," << (i % 2 ? "p" : "q") << "\n";
  }
  auto p = testing::prepare(os.str(), "y", TaskType::Classification);
  EXPECT_DOUBLE_EQ(p.record.meta_features.mean_abs_corr, 1.0);
}

TEST(MetaFeatures, MixedFixtureMatchesHandComputation) {
  // 1000 rows, 6 continuous + 3 categorical features, plus a binary target.
  Rng rng(11);
  std::ostringstream os;
  for (int j = 0; j < 6; ++j) os << "n" << j << ",";
  os << "c0,c1,c2,target\n";
  const char* cats[] = {"alpha", "beta", "gamma"};
  for (int i = 0; i < 1000; ++i) {
    for (int j = 0; j < 6; ++j) os << fmt_double(rng.normal()) << ",";
    for (int j = 0; j < 3; ++j) os << cats[rng.below(3)] << ",";
    os << (i % 4 == 0 ? "yes" : "no") << "\n";
  }
  auto p = testing::prepare(os.str(), "target", TaskType::Classification);
  const auto& m = p.record.meta_features;
  EXPECT_EQ(m.n_instances, 1000.0);
  EXPECT_EQ(m.n_features, 9.0);
  EXPECT_DOUBLE_EQ(m.frac_categorical, 3.0 / 9.0);
  EXPECT_DOUBLE_EQ(m.log_instances, 3.0);
  EXPECT_DOUBLE_EQ(m.log_features, std::log10(9.0));
  EXPECT_DOUBLE_EQ(m.imbalance_ratio, 250.0 / 750.0);
}

TEST(MetaFeatures, RegressionDefaults) {
  auto p = testing::prepare(testing::linear_csv(60, 3, 0.1, 4), "y", TaskType::Regression);
  EXPECT_EQ(p.record.meta_features.n_classes, 0.0);
  EXPECT_EQ(p.record.meta_features.imbalance_ratio, 1.0);
}

TEST(MetaFeatures, SkewAndKurtosisOfKnownColumn) {
  // Column {0, 0, 0, 1}: mean 0.25, m2 = 0.1875, m3 = 0.09375, m4 = 0.08203125.
  std::string csv = "a,b,y\n0,1.5,p\n0,2.5,q\n0,3.5,p\n1,4.5,q\n";
  IngestOptions opts;
  opts.force_numeric = {"a"};
  auto p = prepare_dataset(csv, "n", "y", TaskType::Classification, {}, 0, opts);
  const double skew_a = 0.09375 / std::pow(0.1875, 1.5);
  const double kurt_a = 0.08203125 / (0.1875 * 0.1875) - 3.0;
  // Column b is evenly spaced: zero skew, kurtosis 1.64 - 3.
  const double kurt_b = (2.0 * (1.5 * 1.5 * 1.5 * 1.5 + 0.5 * 0.5 * 0.5 * 0.5) / 4.0) / (1.25 * 1.25) - 3.0;
  EXPECT_NEAR(p.record.meta_features.mean_skew, skew_a / 2.0, 1e-12);
  EXPECT_NEAR(p.record.meta_features.mean_kurtosis, (kurt_a + kurt_b) / 2.0, 1e-12);
}

// Property: meta-features ignore row order.
TEST(MetaFeaturesProperty, PermutationInvariant) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const std::size_t rows = 20 + rng.below(80);
    std::vector<std::string> lines;
    for (std::size_t r = 0; r < rows; ++r) {
      std::ostringstream os;
      os << fmt_double(rng.normal()) << "," << fmt_double(std::exp(rng.normal())) << ","
         << (rng.below(3) == 0 ? "u" : "v") << "," << (rng.below(2) ? "p" : "q");
      lines.push_back(os.str());
    }
    auto to_csv = [&](const std::vector<std::string>& ls) {
      std::string s = "a,b,c,y\n";
      for (const auto& l : ls) s += l + "\n";
      return s;
    };
    auto base = testing::prepare(to_csv(lines), "y", TaskType::Classification).record.meta_features;
    rng.shuffle(std::span<std::string>(lines));
    auto shuffled = testing::prepare(to_csv(lines), "y", TaskType::Classification).record.meta_features;
    const auto a = base.to_array(), b = shuffled.to_array();
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9) << "seed " << seed << " field " << i;
  }
}

// Property: Pearson correlation is invariant to positive scaling.
TEST(MetaFeaturesProperty, ScalingLeavesCorrelationUnchanged) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 100);
    const double scale = 0.001 + 1000.0 * rng.uniform();
    std::ostringstream a, b;
    a << "x,z,w,y\n";
    b << "x,z,w,y\n";
    for (int r = 0; r < 50; ++r) {
      const double x = rng.normal(), z = x + rng.normal(), w = rng.normal();
      const char* y = r % 2 ? "p" : "q";
      a << fmt_double(x) << "," << fmt_double(z) << "," << fmt_double(w) << "," << y << "\n";
      b << fmt_double(x * scale) << "," << fmt_double(z) << "," << fmt_double(w) << "," << y << "\n";
    }
    auto ma = testing::prepare(a.str(), "y", TaskType::Classification).record.meta_features;
    auto mb = testing::prepare(b.str(), "y", TaskType::Classification).record.meta_features;
    EXPECT_NEAR(ma.mean_abs_corr, mb.mean_abs_corr, 1e-9);
  }
}

// Property: degenerate inputs never yield NaN or infinity.
TEST(MetaFeaturesProperty, AlwaysFinite) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    Rng rng(seed + 1000);
    const std::size_t rows = 2 + rng.below(30);
    const std::size_t cols = 1 + rng.below(5);
    std::ostringstream os;
    for (std::size_t c = 0; c < cols; ++c) os << "f" << c << ",";
    os << "y\n";
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        switch ((c + seed) % 4) {
          case 0: os << "3.25,"; break;                              // constant
          case 1: os << fmt_double(rng.normal() * 1e6) << ","; break;  // wide range
          case 2: os << (rng.below(2) ? "" : "1.5") << ","; break;     // sparse
          default: os << "k" << rng.below(2) << ","; break;            // categorical
        }
      }
      os << (r % 2 ? "a" : "b") << "\n";
    }
    auto m = testing::prepare(os.str(), "y", TaskType::Classification).record.meta_features;
    for (double v : m.to_array()) EXPECT_TRUE(std::isfinite(v)) << "seed " << seed;
    EXPECT_GE(m.mean_abs_corr, 0.0);
    EXPECT_LE(m.mean_abs_corr, 1.0);
    EXPECT_GT(m.imbalance_ratio, 0.0);
    EXPECT_LE(m.imbalance_ratio, 1.0);
  }
}

}  // namespace
}  // namespace autolab
