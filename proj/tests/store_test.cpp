#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "autolab/store.hpp"
#include "fixtures.hpp"
#include "store_fixtures.hpp"

namespace autolab {
namespace {

using testing::completed_record;
using testing::TempDir;

ErrorKind error_kind(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Validation;
}

ExperimentRecord pending_record(const std::string& id, const std::string& dataset, const std::string& algo,
                                TimestampMs at) {
  ExperimentRecord r;
  r.id = id;
  r.dataset_id = dataset;
  r.algorithm = algo;
  r.created_at = at;
  r.index_terms = {algo};
  return r;
}

// Ten records: ids, algorithms and statuses chosen so each filter has a
// hand-listed answer.
std::vector<ExperimentRecord> ten_records() {
  std::vector<ExperimentRecord> out;
  out.push_back(completed_record("e01", "D", "knn", {{"k", 1}}, 0.7, 10, {"x"}));
  out.push_back(completed_record("e02", "D", "svm", {{"C", 1}}, 0.8, 11, {"x"}));
  out.push_back(pending_record("e03", "D", "knn", 12));
  out.push_back(completed_record("e04", "E", "knn", {{"k", 3}}, 0.6, 13, {"y"}));
  out.push_back(completed_record("e05", "E", "decision_tree", {{"max_depth", 3}}, 0.9, 14, {"y"}));
  auto failed = pending_record("e06", "F", "knn", 15);
  failed.status = ExperimentStatus::Failed;
  failed.error = "boom";
  out.push_back(failed);
  auto running = pending_record("e07", "F", "knn", 16);
  running.status = ExperimentStatus::Running;
  out.push_back(running);
  out.push_back(completed_record("e08", "F", "knn", {{"k", 11}}, 0.5, 17, {"z"}));
  out.push_back(completed_record("e09", "D", "logistic_regression", {{"C", 10}}, 0.85, 18, {"x"}));
  out.push_back(pending_record("e10", "E", "svm", 19));
  return out;
}

std::vector<std::string> ids(const std::vector<ExperimentRecord>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.id);
  return out;
}

TEST(Store, PutThenGetRoundTrips) {
  TempDir dir;
  ExperimentStore store(dir.path());
  auto rec = testing::prostate_fixture()[0];
  store.put_experiment(rec);
  EXPECT_EQ(store.get_experiment(rec.id), rec);
}

TEST(Store, PutIsIdempotentAndConflictsOnDifferentContent) {
  TempDir dir;
  ExperimentStore store(dir.path());
  auto rec = testing::prostate_fixture()[0];
  store.put_experiment(rec);
  store.put_experiment(rec);
  EXPECT_EQ(store.query_experiments().size(), 1u);
  rec.result->metrics.accuracy = 0.1;
  EXPECT_EQ(error_kind([&] { store.put_experiment(rec); }), ErrorKind::Conflict);
}

TEST(Store, InvariantViolations) {
  TempDir dir;
  ExperimentStore store(dir.path());
  auto rec = pending_record("x", "D", "knn", 1);
  rec.status = ExperimentStatus::Completed;
  EXPECT_EQ(error_kind([&] { store.put_experiment(rec); }), ErrorKind::InvariantViolation);
  rec = pending_record("x", "D", "knn", 1);
  rec.feedback = Vote::Up;
  EXPECT_EQ(error_kind([&] { store.put_experiment(rec); }), ErrorKind::InvariantViolation);
  rec = pending_record("x", "D", "knn", 1);
  rec.status = ExperimentStatus::Failed;
  EXPECT_EQ(error_kind([&] { store.put_experiment(rec); }), ErrorKind::InvariantViolation);
  EXPECT_EQ(store.experiment_count(), 0u);
}

TEST(Store, StatusTransitions) {
  TempDir dir;
  ExperimentStore store(dir.path());
  auto rec = pending_record("x", "D", "knn", 1);
  store.put_experiment(rec);
  rec.status = ExperimentStatus::Running;
  store.update_experiment(rec);
  rec.status = ExperimentStatus::Completed;
  rec.result = testing::classification_result(0.9);
  store.update_experiment(rec);
  auto again = rec;
  again.status = ExperimentStatus::Pending;
  again.result.reset();
  EXPECT_EQ(error_kind([&] { store.update_experiment(again); }), ErrorKind::Conflict);
  again = rec;
  again.result = testing::classification_result(0.5);
  EXPECT_EQ(error_kind([&] { store.update_experiment(again); }), ErrorKind::Conflict);
  again = rec;
  again.algorithm = "svm";
  EXPECT_EQ(error_kind([&] { store.update_experiment(again); }), ErrorKind::Conflict);
  EXPECT_EQ(error_kind([&] { store.update_experiment(pending_record("nope", "D", "knn", 1)); }),
            ErrorKind::UnknownExperiment);
}

TEST(Query, ByDatasetCountsExactly) {
  TempDir dir;
  ExperimentStore store(dir.path());
  for (const auto& r : ten_records()) store.put_experiment(r);
  EXPECT_EQ(ids(store.query_experiments({{"dataset_id", "D"}})),
            (std::vector<std::string>{"e01", "e02", "e03", "e09"}));
  EXPECT_EQ(store.query_experiments().size(), 10u);
}

TEST(Query, ConjunctionOnSeededFixture) {
  TempDir dir;
  ExperimentStore store(dir.path());
  for (const auto& r : ten_records()) store.put_experiment(r);
  EXPECT_EQ(ids(store.query_experiments({{"status", "completed"}, {"algorithm", "knn"}})),
            (std::vector<std::string>{"e01", "e04", "e08"}));
  EXPECT_EQ(error_kind([&] { store.query_experiments({{"colour", "red"}}); }), ErrorKind::UnknownField);
}

TEST(QueryProperty, ConjunctionIsIntersection) {
  TempDir dir;
  ExperimentStore store(dir.path());
  for (const auto& r : ten_records()) store.put_experiment(r);
  const ExperimentFilter singles[] = {{{"dataset_id", "D"}},   {{"dataset_id", "E"}},    {{"status", "completed"}},
                                      {{"status", "pending"}}, {{"algorithm", "knn"}},   {{"index_term", "x"}},
                                      {{"task", "classification"}}, {{"launched_by", "user"}}};
  for (const auto& a : singles)
    for (const auto& b : singles) {
      auto ra = ids(store.query_experiments(a));
      auto rb = ids(store.query_experiments(b));
      std::vector<std::string> expect;
      for (const auto& id : ra)
        if (std::find(rb.begin(), rb.end(), id) != rb.end()) expect.push_back(id);
      ExperimentFilter both = a;
      both.insert(both.end(), b.begin(), b.end());
      EXPECT_EQ(ids(store.query_experiments(both)), expect);
    }
}

TEST(Semantic, ProstateQueryReturnsHandRankedBest) {
  TempDir dir;
  ExperimentStore store(dir.path());
  for (const auto& r : testing::prostate_fixture()) store.put_experiment(r);
  SemanticQuery q;
  q.tags_any = {"prostate"};
  q.metric = "accuracy";
  q.descending = true;
  q.limit = 1;
  auto best = store.semantic_best_configs(q);
  ASSERT_EQ(best.size(), 1u);
  EXPECT_EQ(best[0].experiment_id, "exp-p3");
  EXPECT_EQ(best[0].algorithm, "random_forest");
  EXPECT_EQ(best[0].metric_value, 0.91);
  EXPECT_EQ(best[0].dataset_id, "ds-prostate-b");

  q.limit = 10;
  std::vector<std::string> order;
  for (const auto& b : store.semantic_best_configs(q)) order.push_back(b.experiment_id);
  EXPECT_EQ(order, (std::vector<std::string>{"exp-p3", "exp-p4", "exp-p1", "exp-p2"}));
}

TEST(Semantic, EmptyAndErrors) {
  TempDir dir;
  ExperimentStore store(dir.path());
  for (const auto& r : testing::prostate_fixture()) store.put_experiment(r);
  SemanticQuery q;
  q.tags_any = {"melanoma"};
  EXPECT_TRUE(store.semantic_best_configs(q).empty());
  q.metric = "precision";
  EXPECT_EQ(error_kind([&] { store.semantic_best_configs(q); }), ErrorKind::UnknownMetric);
  q.metric = "accuracy";
  q.limit = 0;
  EXPECT_EQ(error_kind([&] { store.semantic_best_configs(q); }), ErrorKind::Validation);
}

TEST(Semantic, EqualMetricsOrderedByCreationThenId) {
  TempDir dir;
  ExperimentStore store(dir.path());
  store.put_experiment(completed_record("b", "D", "knn", {{"k", 1}}, 0.8, 5, {"t"}));
  store.put_experiment(completed_record("a", "D", "svm", {{"C", 1}}, 0.8, 5, {"t"}));
  store.put_experiment(completed_record("c", "D", "svm", {{"C", 10}}, 0.8, 4, {"t"}));
  SemanticQuery q;
  q.tags_any = {"t"};
  std::vector<std::string> order;
  for (const auto& b : store.semantic_best_configs(q)) order.push_back(b.experiment_id);
  EXPECT_EQ(order, (std::vector<std::string>{"c", "a", "b"}));
}

TEST(SemanticProperty, UnlimitedQueryIsSortedPermutationOfMatches) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TempDir dir;
    ExperimentStore store(dir.path());
    Rng rng(seed);
    const std::vector<std::string> pool{"a", "b", "c", "d"};
    std::vector<ExperimentRecord> all;
    for (int i = 0; i < 100; ++i) {
      std::set<std::string> tags{pool[rng.below(4)]};
      if (rng.uniform() < 0.3) tags.insert(pool[rng.below(4)]);
      // Coarse metric values force plenty of ties.
      auto r = completed_record("r" + std::to_string(i), "D" + std::to_string(i % 7), "knn", {{"k", i}},
                                static_cast<double>(rng.below(10)) / 10, static_cast<TimestampMs>(rng.below(50)),
                                tags);
      if (rng.uniform() < 0.2) {
        r.status = ExperimentStatus::Pending;
        r.result.reset();
        r.finished_at.reset();
      }
      store.put_experiment(r);
      all.push_back(r);
    }
    SemanticQuery q;
    q.tags_any = {"a", "c"};
    auto got = store.semantic_best_configs(q);
    // Brute force: filter then sort with the documented comparator.
    std::vector<ExperimentRecord> expect;
    for (const auto& r : all)
      if (r.status == ExperimentStatus::Completed && (r.index_terms.count("a") || r.index_terms.count("c")))
        expect.push_back(r);
    std::sort(expect.begin(), expect.end(), [](const auto& x, const auto& y) {
      const double mx = *x.result->metrics.accuracy, my = *y.result->metrics.accuracy;
      if (mx != my) return mx > my;
      return std::tie(x.created_at, x.id) < std::tie(y.created_at, y.id);
    });
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].experiment_id, expect[i].id);
  }
}

TEST(Durability, ReopenSeesEverything) {
  TempDir dir;
  auto recs = ten_records();
  {
    ExperimentStore store(dir.path());
    for (const auto& r : recs) store.put_experiment(r);
    auto updated = recs[2];
    updated.status = ExperimentStatus::Running;
    store.update_experiment(updated);
    store.record_feedback("e01", Vote::Up, 100);
    store.link_artifact("e01", "roc_csv", store.put_artifact("fpr,tpr\n"));
  }
  ExperimentStore reopened(dir.path());
  EXPECT_EQ(reopened.experiment_count(), 10u);
  EXPECT_EQ(reopened.require_experiment("e03").status, ExperimentStatus::Running);
  EXPECT_EQ(reopened.require_experiment("e01").feedback, Vote::Up);
  EXPECT_EQ(reopened.feedback_events().size(), 1u);
  EXPECT_EQ(reopened.get_artifact(reopened.artifacts_of("e01").at("roc_csv")), "fpr,tpr\n");
  EXPECT_EQ(reopened.require_experiment("e05"), recs[4]);
  // Re-putting what is already there stays a no-op after restart.
  reopened.put_experiment(recs[4]);
  EXPECT_EQ(reopened.experiment_count(), 10u);
}

TEST(Durability, TornTailIsDiscarded) {
  TempDir dir;
  {
    ExperimentStore store(dir.path());
    store.put_experiment(ten_records()[0]);
  }
  {
    std::ofstream log(dir.path() / "log.jsonl", std::ios::app);
    log << "{\"type\":\"experiment\",\"record\":{\"id\":\"half";
  }
  {
    ExperimentStore store(dir.path());
    EXPECT_EQ(store.experiment_count(), 1u);
    store.put_experiment(ten_records()[1]);
  }
  ExperimentStore store(dir.path());
  EXPECT_EQ(store.experiment_count(), 2u);
}

TEST(Feedback, RequiresCompletedExperiment) {
  TempDir dir;
  ExperimentStore store(dir.path());
  for (const auto& r : ten_records()) store.put_experiment(r);
  EXPECT_EQ(error_kind([&] { store.record_feedback("e03", Vote::Up, 1); }), ErrorKind::NotCompleted);
  EXPECT_EQ(error_kind([&] { store.record_feedback("zzz", Vote::Up, 1); }), ErrorKind::UnknownExperiment);
  store.record_feedback("e01", Vote::Up, 1);
  store.record_feedback("e01", Vote::Down, 2);
  EXPECT_EQ(store.require_experiment("e01").feedback, Vote::Down);
  EXPECT_EQ(store.feedback_events().size(), 2u);
}

TEST(Registry, IngestIsIdempotentByContent) {
  TempDir dir;
  ExperimentStore store(dir.path());
  const auto csv = testing::blobs_csv(100, 4, 1);
  auto first = ingest_dataset(store, csv, "blobs", "label", TaskType::Classification, {"Toy", "blobs"}, 5);
  EXPECT_TRUE(first.created);
  EXPECT_EQ(first.record.tags, (std::set<std::string>{"blobs", "toy"}));
  auto second = ingest_dataset(store, csv, "other name", "label", TaskType::Classification, {}, 9);
  EXPECT_FALSE(second.created);
  EXPECT_EQ(second.record, first.record);
  EXPECT_EQ(store.list_datasets().size(), 1u);
  EXPECT_EQ(error_kind([&] { ingest_dataset(store, csv, "x", "x0", TaskType::Regression, {}, 9); }),
            ErrorKind::Conflict);

  ExperimentStore reopened(dir.path());
  auto rec = reopened.require_dataset(first.record.id);
  auto table = load_dataset_table(reopened, rec);
  EXPECT_EQ(table.n_rows, 100u);
  EXPECT_EQ(error_kind([&] { reopened.require_dataset("nope"); }), ErrorKind::UnknownDataset);
}

TEST(Concurrency, ReadersSeeWholeRecords) {
  TempDir dir;
  ExperimentStore store(dir.path());
  std::atomic<bool> done{false};
  std::thread writer([&] {
    for (int i = 0; i < 200; ++i)
      store.put_experiment(completed_record("w" + std::to_string(i), "D", "knn", {{"k", i}}, 0.5, i, {"t"}));
    done = true;
  });
  std::size_t last = 0;
  while (!done) {
    auto all = store.query_experiments({{"index_term", "t"}});
    EXPECT_GE(all.size(), last);
    last = all.size();
    for (const auto& r : all) EXPECT_TRUE(r.result.has_value());
  }
  writer.join();
  EXPECT_EQ(store.query_experiments().size(), 200u);
}

}  // namespace
}  // namespace autolab
