#include <gtest/gtest.h>

#include <thread>

#include "autolab/controller.hpp"
#include "chaos.hpp"
#include "fixtures.hpp"
#include "store_fixtures.hpp"

namespace autolab {
namespace {

using testing::TempDir;

class ControllerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    store = std::make_unique<ExperimentStore>(dir.path());
    dataset = ingest_dataset(*store, testing::blobs_csv(60, 4, 3), "blobs", "label", TaskType::Classification,
                             {"toy"}, clock.now_ms())
                  .record;
    controller = std::make_unique<Controller>(*store, clock);
  }

  SubmitRequest request(int k, LaunchedBy by = LaunchedBy::User, std::uint64_t seed = 42) {
    return {dataset.id, {"knn", {{"k", k}}}, {3, seed}, by};
  }

  static JobOutcome ok(double accuracy = 0.9) {
    JobOutcome o;
    o.result = testing::classification_result(accuracy);
    return o;
  }

  TempDir dir;
  ManualClock clock;
  std::unique_ptr<ExperimentStore> store;
  DatasetRecord dataset;
  std::unique_ptr<Controller> controller;
};

TEST_F(ControllerTest, SubmitThenNextJobReturnsIt) {
  auto sub = controller->submit(request(1));
  EXPECT_FALSE(sub.duplicate);
  EXPECT_EQ(store->require_experiment(sub.experiment_id).status, ExperimentStatus::Pending);
  auto w = controller->register_worker();
  auto job = controller->next_job(w);
  ASSERT_TRUE(job);
  EXPECT_EQ(job->job_id, sub.job_id);
  EXPECT_EQ(job->state, JobState::Leased);
  EXPECT_EQ(job->attempts, 1u);
  EXPECT_EQ(job->lease->deadline, clock.now_ms() + 300'000);
  EXPECT_EQ(store->require_experiment(sub.experiment_id).status, ExperimentStatus::Running);
  EXPECT_FALSE(controller->next_job(controller->register_worker()));
}

TEST_F(ControllerTest, IdenticalSubmissionIsDeduplicated) {
  auto a = controller->submit(request(3));
  auto b = controller->submit(request(3));
  EXPECT_TRUE(b.duplicate);
  EXPECT_EQ(a.experiment_id, b.experiment_id);
  EXPECT_EQ(controller->counts().total, 1u);
  // A different seed is a different experiment.
  EXPECT_FALSE(controller->submit(request(3, LaunchedBy::User, 7)).duplicate);
}

TEST_F(ControllerTest, UserJobsBeatAiJobsThenFifo) {
  auto ai1 = controller->submit(request(1, LaunchedBy::Ai));
  auto ai2 = controller->submit(request(3, LaunchedBy::Ai));
  auto user = controller->submit(request(5, LaunchedBy::User));
  auto w = controller->register_worker("w", 3);
  EXPECT_EQ(controller->next_job(w)->job_id, user.job_id);
  EXPECT_EQ(controller->next_job(w)->job_id, ai1.job_id);
  EXPECT_EQ(controller->next_job(w)->job_id, ai2.job_id);
}

TEST_F(ControllerTest, SubmitValidation) {
  auto bad = request(1);
  bad.dataset_id = "missing";
  EXPECT_THROW(controller->submit(bad), Error);
  bad = request(4);  // k=4 is not on the menu
  try {
    controller->submit(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
  EXPECT_EQ(controller->counts().total, 0u);
}

TEST_F(ControllerTest, RacingWorkersNeverShareAJob) {
  controller->submit(request(1));
  std::vector<std::string> ids;
  for (int i = 0; i < 8; ++i) ids.push_back(controller->register_worker());
  std::atomic<int> got{0};
  std::vector<std::thread> threads;
  for (const auto& id : ids)
    threads.emplace_back([&, id] {
      if (controller->next_job(id)) ++got;
    });
  for (auto& t : threads) t.join();
  EXPECT_EQ(got.load(), 1);
}

TEST_F(ControllerTest, ExpiredLeaseIsReleasedWithAnotherAttempt) {
  auto sub = controller->submit(request(1));
  auto a = controller->register_worker("a");
  auto b = controller->register_worker("b");
  ASSERT_TRUE(controller->next_job(a));
  clock.advance_ms(300'000);
  EXPECT_TRUE(controller->reap_expired_leases().empty());  // deadline not yet passed
  clock.advance_ms(1);
  EXPECT_EQ(controller->reap_expired_leases(), std::vector<std::string>{sub.job_id});
  EXPECT_EQ(store->require_experiment(sub.experiment_id).status, ExperimentStatus::Pending);
  auto again = controller->next_job(b);
  ASSERT_TRUE(again);
  EXPECT_EQ(again->job_id, sub.job_id);
  EXPECT_EQ(again->attempts, 2u);
}

TEST_F(ControllerTest, HeartbeatExtendsLeases) {
  controller->submit(request(1));
  auto a = controller->register_worker("a");
  ASSERT_TRUE(controller->next_job(a));
  clock.advance_ms(200'000);
  controller->heartbeat(a);
  clock.advance_ms(200'000);
  EXPECT_TRUE(controller->reap_expired_leases().empty());
  EXPECT_THROW(controller->heartbeat("ghost"), Error);
  EXPECT_THROW(controller->next_job("ghost"), Error);
}

TEST_F(ControllerTest, GivesUpAfterMaxAttempts) {
  auto sub = controller->submit(request(1));
  std::vector<ExperimentRecord> events;
  controller->add_completion_listener([&](const ExperimentRecord& r) { events.push_back(r); });
  auto a = controller->register_worker("a");
  for (int i = 0; i < 3; ++i) {
    ASSERT_TRUE(controller->next_job(a));
    clock.advance_ms(300'001);
    controller->reap_expired_leases();
  }
  EXPECT_EQ(controller->get_job(sub.job_id)->state, JobState::Failed);
  auto rec = store->require_experiment(sub.experiment_id);
  EXPECT_EQ(rec.status, ExperimentStatus::Failed);
  EXPECT_TRUE(rec.error.has_value());
  ASSERT_EQ(events.size(), 1u);
  EXPECT_EQ(events[0].status, ExperimentStatus::Failed);
  // Retrying a failed experiment reuses its job.
  auto retry = controller->submit(request(1));
  EXPECT_FALSE(retry.duplicate);
  EXPECT_EQ(controller->get_job(sub.job_id)->state, JobState::Queued);
  EXPECT_EQ(controller->counts().total, 1u);
}

TEST_F(ControllerTest, CompleteOnceAndTwice) {
  auto sub = controller->submit(request(1));
  int events = 0;
  controller->add_completion_listener([&](const ExperimentRecord&) { ++events; });
  auto a = controller->register_worker("a");
  auto job = controller->next_job(a);
  EXPECT_TRUE(controller->complete_job(job->job_id, a, ok(0.9)));
  EXPECT_FALSE(controller->complete_job(job->job_id, a, ok(0.9)));
  EXPECT_FALSE(controller->complete_job(job->job_id, a, ok(0.1)));
  auto rec = store->require_experiment(sub.experiment_id);
  EXPECT_EQ(rec.status, ExperimentStatus::Completed);
  EXPECT_EQ(rec.result->metrics.accuracy, 0.9);
  EXPECT_EQ(events, 1);
  EXPECT_THROW(controller->complete_job("job-nope", a, ok()), Error);
}

TEST_F(ControllerTest, StaleWorkerLosesToReassignedWorker) {
  auto sub = controller->submit(request(1));
  auto stale = controller->register_worker("stale");
  auto fresh = controller->register_worker("fresh");
  auto job = controller->next_job(stale);
  clock.advance_ms(300'001);
  controller->reap_expired_leases();
  ASSERT_TRUE(controller->next_job(fresh));
  EXPECT_FALSE(controller->complete_job(job->job_id, stale, ok(0.1)));
  EXPECT_TRUE(controller->complete_job(job->job_id, fresh, ok(0.8)));
  EXPECT_FALSE(controller->complete_job(job->job_id, stale, ok(0.1)));
  EXPECT_EQ(store->require_experiment(sub.experiment_id).result->metrics.accuracy, 0.8);
}

TEST_F(ControllerTest, ErrorOutcomeFailsTheExperiment) {
  auto sub = controller->submit(request(1));
  auto a = controller->register_worker("a");
  auto job = controller->next_job(a);
  JobOutcome bad;
  bad.error = "TooFewSamples: nope";
  EXPECT_TRUE(controller->complete_job(job->job_id, a, bad));
  auto rec = store->require_experiment(sub.experiment_id);
  EXPECT_EQ(rec.status, ExperimentStatus::Failed);
  EXPECT_EQ(rec.error, "TooFewSamples: nope");
}

TEST_F(ControllerTest, CapacityLimitsConcurrentLeases) {
  controller->submit(request(1));
  controller->submit(request(3));
  auto a = controller->register_worker("a", 1);
  EXPECT_TRUE(controller->next_job(a));
  EXPECT_FALSE(controller->next_job(a));
  EXPECT_EQ(controller->register_worker("a", 2), "a");
  EXPECT_TRUE(controller->next_job(a));
}

TEST_F(ControllerTest, CancelQueuedAndLeased) {
  auto s1 = controller->submit(request(1));
  auto s2 = controller->submit(request(3));
  auto a = controller->register_worker("a");
  auto job = controller->next_job(a);
  EXPECT_TRUE(controller->cancel(s2.job_id));
  EXPECT_TRUE(controller->cancel(s1.job_id));
  EXPECT_FALSE(controller->cancel(s1.job_id));
  EXPECT_FALSE(controller->complete_job(job->job_id, a, ok()));
  auto c = controller->counts();
  EXPECT_EQ(c.cancelled, 2u);
  EXPECT_EQ(c.sum(), c.total);
  EXPECT_EQ(store->require_experiment(s1.experiment_id).status, ExperimentStatus::Failed);
}

TEST_F(ControllerTest, RestartRequeuesUnfinishedWork) {
  // Recovery orders by creation time, so space the submissions apart.
  auto s1 = controller->submit(request(1));
  clock.advance_ms(1);
  auto s2 = controller->submit(request(3));
  clock.advance_ms(1);
  auto s3 = controller->submit(request(5));
  auto a = controller->register_worker("a", 2);
  auto j1 = controller->next_job(a);
  controller->complete_job(j1->job_id, a, ok());
  controller->next_job(a);  // s2 left running when the process dies
  controller.reset();
  store.reset();
  store = std::make_unique<ExperimentStore>(dir.path());
  controller = std::make_unique<Controller>(*store, clock);
  auto c = controller->counts();
  EXPECT_EQ(c.queued, 2u);
  EXPECT_EQ(store->require_experiment(s2.experiment_id).status, ExperimentStatus::Pending);
  auto b = controller->register_worker("b", 2);
  EXPECT_EQ(controller->next_job(b)->experiment_id, s2.experiment_id);
  EXPECT_EQ(controller->next_job(b)->experiment_id, s3.experiment_id);
  EXPECT_TRUE(controller->submit(request(1)).duplicate);
  EXPECT_EQ(store->require_experiment(s1.experiment_id).status, ExperimentStatus::Completed);
}

TEST_F(ControllerTest, WorkerPoolRunsRealTraining) {
  for (int k : {1, 3, 5}) controller->submit(request(k));
  auto transport = std::make_shared<LocalTransport>(*controller, *store);
  WorkerPool pool(transport, {2, std::chrono::milliseconds(5), std::chrono::milliseconds(1000), "local"});
  pool.start();
  EXPECT_TRUE(controller->wait_idle(std::chrono::seconds(60)));
  pool.stop();
  auto done = store->query_experiments({{"status", "completed"}});
  ASSERT_EQ(done.size(), 3u);
  for (const auto& r : done) {
    EXPECT_GE(*r.result->metrics.balanced_accuracy, 0.9);
    ASSERT_TRUE(r.model_artifact.has_value());
    EXPECT_EQ(ml::read_artifact_header(store->get_artifact(*r.model_artifact)).algorithm, "knn");
  }
}

TEST(JobJson, RoundTrip) {
  Job job;
  job.job_id = "job-1";
  job.experiment_id = "exp-1";
  job.payload = {"ds", {"svm", {{"C", 1.0}}}, {5, 9}};
  job.state = JobState::Leased;
  job.attempts = 2;
  job.lease = Lease{"w", 123};
  job.priority = LaunchedBy::Ai;
  job.sequence = 4;
  nlohmann::json j = job;
  EXPECT_EQ(j["payload"]["seed"], 9);
  EXPECT_EQ(j.get<Job>(), job);
}

TEST(Chaos, ExactlyOnceUnderScriptedFaults) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto r = testing::run_chaos(seed);
    EXPECT_EQ(r.jobs, 50u);
    EXPECT_EQ(r.terminal_experiments, 50u) << "seed " << seed;
    EXPECT_TRUE(r.bad_deposits.empty()) << "seed " << seed;
    EXPECT_EQ(r.conservation_violations, 0u);
    EXPECT_EQ(r.crashes, 2u);
    EXPECT_GT(r.duplicate_completions, 0u);
    EXPECT_GT(r.expired_leases, 0u);
  }
}

}  // namespace
}  // namespace autolab
