#include <gtest/gtest.h>

#include <fstream>
#include <thread>

#include "autolab/http.hpp"
#include "autolab/service.hpp"
#include "fixtures.hpp"
#include "store_fixtures.hpp"
#include "webhook_receiver.hpp"

using namespace autolab;
using namespace autolab::testing;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

ServiceConfig config_in(const TempDir& dir, std::size_t workers = 0) {
  ServiceConfig c;
  c.listen_addr = "127.0.0.1:0";
  c.data_dir = dir.path() / "data";
  c.local_workers = workers;
  return c;
}

json wait_terminal(const ApiClient& api, const std::string& id, std::chrono::seconds timeout = 120s) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    auto rec = api.get("/experiments/" + id);
    if (rec["status"] == "completed" || rec["status"] == "failed") return rec;
    if (std::chrono::steady_clock::now() > deadline) return rec;
    std::this_thread::sleep_for(50ms);
  }
}


}  // namespace

TEST(ServiceConfig, FileThenEnvironment) {
  TempDir dir("cfg");
  const auto file = dir.path() / "autolab.conf";
  std::ofstream(file) << "# comment\nLISTEN_ADDR = 0.0.0.0:9000\ndata_dir=/tmp/x\nMAX_ATTEMPTS=5\n";
  auto env = [](const std::string& k) -> std::optional<std::string> {
    if (k == "MAX_ATTEMPTS") return "7";
    if (k == "API_TOKEN") return "secret";
    return std::nullopt;
  };
  auto c = load_service_config(file, env);
  EXPECT_EQ(c.listen_addr, "0.0.0.0:9000");
  EXPECT_EQ(c.data_dir, "/tmp/x");
  EXPECT_EQ(c.max_attempts, 7u);
  EXPECT_EQ(c.api_token, "secret");
  EXPECT_EQ(c.lease_ttl_secs, 300);

  std::ofstream(file) << "BOGUS=1\n";
  EXPECT_THROW(load_service_config(file, env), Error);
  EXPECT_THROW(parse_listen_addr("nocolon"), Error);
  EXPECT_EQ(parse_listen_addr(":80").first, "0.0.0.0");
}

TEST(Service, DatasetsUploadIdempotentlyAndAuthGates) {
  TempDir dir("svc");
  auto cfg = config_in(dir);
  cfg.api_token = "t0k";
  Service svc(cfg);
  svc.start();
  ApiClient anon(svc.base_url());
  EXPECT_EQ(anon.request("GET", "/datasets").status, 401);
  EXPECT_EQ(anon.request("GET", "/health").status, 200);

  ApiClient api(svc.base_url(), "t0k");
  const auto csv = blobs_csv(30, 3, 1);
  auto up = api.post_multipart("/datasets", {{"file", csv, "blobs.csv", "text/csv"},
                                             {"target", "label", "", ""},
                                             {"task", "classification", "", ""},
                                             {"tags", "demo, toy", "", ""}});
  ASSERT_EQ(up.status, 201) << up.body;
  auto rec = json::parse(up.body)["dataset"];
  EXPECT_EQ(rec["name"], "blobs");
  EXPECT_EQ(rec["tags"], json({"demo", "toy"}));

  auto again = api.post("/datasets", {{"csv", csv}, {"target", "label"}, {"task", "classification"}, {"name", "x"}});
  EXPECT_FALSE(again["created"].get<bool>());
  EXPECT_EQ(again["dataset"]["id"], rec["id"]);
  EXPECT_EQ(api.get_text("/datasets/" + rec["id"].get<std::string>() + "/data").size(), csv.size());
  EXPECT_EQ(api.get("/datasets").size(), 1u);

  try {
    api.get("/datasets/nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownDataset);
  }
  try {
    api.post("/datasets", {{"csv", csv}, {"target", "x0"}, {"task", "regression"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Conflict);
  }
  try {
    api.post("/datasets", {{"csv", blobs_csv(30, 3, 9)}, {"target", "label"}, {"task", "regression"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TargetError);
  }
}

TEST(Service, EndToEndWithLocalWorkers) {
  TempDir dir("e2e");
  Service svc(config_in(dir, 2));
  svc.start();
  ApiClient api(svc.base_url());
  const auto ds = api.post("/datasets", {{"csv", blobs_csv(60, 3, 2)}, {"target", "label"},
                                         {"task", "classification"}, {"name", "blobs"}})["dataset"];
  const std::string ds_id = ds["id"];

  EXPECT_EQ(api.get("/algorithms?task=classification").size(), 6u);
  EXPECT_EQ(api.get("/algorithms").size(), 12u);

  auto one = api.post("/experiments", {{"dataset_id", ds_id}, {"algorithm", "knn"}, {"parameters", {{"k", 3}}},
                                       {"cv", 3}, {"seed", 5}});
  ASSERT_EQ(one["submitted"].size(), 1u);
  const std::string exp_id = one["submitted"][0]["experiment_id"];
  auto rec = wait_terminal(api, exp_id);
  ASSERT_EQ(rec["status"], "completed") << rec.dump();
  EXPECT_GT(rec["result"]["metrics"]["balanced_accuracy"].get<double>(), 0.8);
  EXPECT_EQ(rec["cv"]["folds"], 3);

  auto dup = api.post("/experiments", {{"dataset_id", ds_id}, {"algorithm", "knn"}, {"parameters", {{"k", 3}}},
                                       {"cv", 3}, {"seed", 5}});
  EXPECT_TRUE(dup["submitted"][0]["duplicate"].get<bool>());

  auto grid = api.post("/experiments", {{"dataset_id", ds_id}, {"algorithm", "decision_tree"}, {"grid", true}, {"cv", 3}});
  EXPECT_EQ(grid["submitted"].size(), 12u);
  for (const auto& s : grid["submitted"]) EXPECT_EQ(wait_terminal(api, s["experiment_id"])["status"], "completed");

  auto listed = api.get("/experiments?dataset_id=" + ds_id + "&algorithm=decision_tree");
  EXPECT_EQ(listed.size(), 12u);
  try {
    api.get("/experiments?colour=red");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownField);
  }

  auto roc = api.get("/experiments/" + exp_id + "/roc");
  EXPECT_GE(roc["roc"]["points"].size(), 2u);
  const auto csv = api.get_text("/experiments/" + exp_id + "/roc?format=csv");
  EXPECT_EQ(csv.substr(0, 8), "fpr,tpr\n");
  EXPECT_EQ(api.get("/experiments/" + exp_id + "/artifacts")["roc_csv"], roc["artifacts"]["roc_csv"]);

  auto fb = api.post("/experiments/" + exp_id + "/feedback", {{"vote", "up"}});
  EXPECT_EQ(fb["experiment"]["feedback"], "up");
  EXPECT_EQ(fb["kb_entry"]["feedback_delta"], 1);

  // The only KB evidence is this dataset's own runs, all of which are history.
  auto recs = api.get("/recommendations?dataset_id=" + ds_id + "&n=3");
  EXPECT_TRUE(recs["recommendations"].empty());
  std::string tsv;
  for (std::size_t i = 0; i < kb_columns().size(); ++i) tsv += (i ? "\t" : "") + kb_columns()[i];
  tsv += "\nother\t100\t2\t2\t1\t0\t0.1\t0\t0\t4.6\t1.4\tsvm\t{}\tbalanced_accuracy\t0.99\n";
  api.request("POST", "/kb", tsv, "text/plain");
  recs = api.get("/recommendations?dataset_id=" + ds_id + "&n=3");
  ASSERT_EQ(recs["recommendations"].size(), 1u);
  EXPECT_EQ(recs["recommendations"][0]["config"]["algorithm"], "svm");

  auto heat = api.get("/reports/heatmap?metric=balanced_accuracy");
  EXPECT_EQ(heat["col_labels"], json({"blobs"}));
  EXPECT_EQ(heat["row_labels"].size(), 2u);
  EXPECT_NE(api.get_text("/reports/heatmap?metric=accuracy&format=svg").find("<svg"), std::string::npos);
  const auto table = api.get_text("/export/table");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 14);
}

TEST(Service, RemoteWorkersOverHttp) {
  TempDir dir("remote");
  Service svc(config_in(dir));
  svc.start();
  ApiClient api(svc.base_url());
  const std::string ds_id = api.post("/datasets", {{"csv", linear_csv(50, 2, 0.1, 3)}, {"target", "y"},
                                                   {"task", "regression"}})["dataset"]["id"];
  auto sub = api.post("/experiments", {{"dataset_id", ds_id}, {"algorithm", "elastic_net"}, {"grid", true}, {"cv", 3}});
  WorkerPoolOptions opts;
  opts.workers = 2;
  opts.poll_interval = 20ms;
  opts.name_prefix = "remote";
  WorkerPool pool(std::make_shared<HttpTransport>(svc.base_url()), opts);
  pool.start();
  for (const auto& s : sub["submitted"]) {
    auto rec = wait_terminal(api, s["experiment_id"]);
    EXPECT_EQ(rec["status"], "completed");
    EXPECT_GT(rec["result"]["metrics"]["r2"].get<double>(), 0.5);
  }
  pool.stop();
  auto workers = api.get("/workers");
  EXPECT_EQ(workers.size(), 2u);
  EXPECT_EQ(api.request("POST", "/workers/ghost/next").status, 404);
  EXPECT_EQ(api.request("POST", "/workers/remote-1/next").status, 204);
}

TEST(Service, IdempotencyKeyReplaysPriorResponse) {
  TempDir dir("idem");
  Service svc(config_in(dir));
  svc.start();
  ApiClient api(svc.base_url());
  const std::string ds_id = api.post("/datasets", {{"csv", blobs_csv(30, 3, 1)}, {"target", "label"},
                                                   {"task", "classification"}})["dataset"]["id"];
  json body = {{"dataset_id", ds_id}, {"algorithm", "svm"}};
  auto a = api.post("/experiments", body, "req-1");
  auto b = api.post("/experiments", body, "req-1");
  EXPECT_EQ(a, b);
  EXPECT_FALSE(b["submitted"][0]["duplicate"].get<bool>());  // replayed, not re-executed
  EXPECT_TRUE(api.post("/experiments", body, "req-2")["submitted"][0]["duplicate"].get<bool>());
  EXPECT_EQ(svc.controller().counts().total, 1u);
}

TEST(Service, KnowledgeBaseUploadAndBestQuery) {
  TempDir dir("kb");
  Service svc(config_in(dir));
  svc.start();
  ApiClient api(svc.base_url());
  std::string tsv;
  for (std::size_t i = 0; i < kb_columns().size(); ++i) tsv += (i ? "\t" : "") + kb_columns()[i];
  tsv += "\nd1\t100\t4\t2\t1\t0\t0.1\t0\t0\t4.6\t1.4\tknn\t{\"k\":5}\tbalanced_accuracy\t0.8\n";
  tsv += "d1\t100\t4\t2\t1\t0\t0.1\t0\t0\t4.6\t1.4\tknn\tnot-json\tbalanced_accuracy\t0.8\n";
  auto r = api.request("POST", "/kb", tsv, "text/tab-separated-values");
  ASSERT_EQ(r.status, 201) << r.body;
  auto j = json::parse(r.body);
  EXPECT_EQ(j["loaded"], 1);
  EXPECT_EQ(j["errors"].size(), 1u);
  EXPECT_EQ(api.request("POST", "/kb", tsv, "text/tab-separated-values").status, 200);
  EXPECT_EQ(api.get("/kb")["bootstrap"], 1);
  EXPECT_EQ(api.request("POST", "/kb", "bad\theader\n", "text/plain").status, 400);

  for (const auto& rec : prostate_fixture()) {
    svc.store().put_experiment(rec);
  }
  auto best = api.get("/best?tags=prostate&metric=accuracy&order=desc&limit=1");
  ASSERT_EQ(best["results"].size(), 1u);
  EXPECT_EQ(best["results"][0]["experiment_id"], "exp-p3");
  EXPECT_EQ(best["results"][0]["metric_value"], 0.91);
}

TEST(Service, KnowledgeSurvivesRestart) {
  TempDir dir("restart");
  std::string tsv;
  for (std::size_t i = 0; i < kb_columns().size(); ++i) tsv += (i ? "\t" : "") + kb_columns()[i];
  tsv += "\nd1\t100\t4\t2\t1\t0\t0.1\t0\t0\t4.6\t1.4\tsvm\t{}\tbalanced_accuracy\t0.8\n";
  {
    Service svc(config_in(dir));
    svc.start();
    ApiClient(svc.base_url()).request("POST", "/kb", tsv, "text/plain");
  }
  Service svc(config_in(dir));
  EXPECT_EQ(svc.recommender().snapshot().size(), 1u);
}

TEST(Webhook, ReceiverSeesExactBodies) {
  WebhookReceiver rx;
  WebhookNotifier n({rx.url()});
  NotificationEvent e;
  e.kind = NotificationKind::AiUpdate;
  e.session_id = "ai-1";
  e.summary = {{"best_metric", 0.9}};
  e.timestamp = 5;
  n.send(e);
  ASSERT_TRUE(n.flush(10s));
  auto got = rx.events();
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], json(e));
  EXPECT_EQ(n.delivered(), 1u);
}

TEST(Webhook, UnreachableEndpointGivesUpAfterThreeAttempts) {
  int dead_port;
  {
    httplib::Server s;
    dead_port = s.bind_to_any_port("127.0.0.1");
  }
  WebhookOptions opts{"http://127.0.0.1:" + std::to_string(dead_port) + "/hook", 3, 10ms, 500ms};
  WebhookNotifier n(opts);
  n.send({});
  ASSERT_TRUE(n.flush(10s));
  EXPECT_EQ(n.attempts(), 3u);
  EXPECT_EQ(n.failed(), 1u);
  WebhookNotifier off({});
  off.send({});
  EXPECT_TRUE(off.flush(1ms));
  EXPECT_EQ(off.attempts(), 0u);
}

TEST(Service, AiSessionNotifiesWebhook) {
  WebhookReceiver rx;
  TempDir dir("ai");
  auto cfg = config_in(dir, 1);
  cfg.webhook_url = rx.url();
  Service svc(cfg);
  svc.start();
  ApiClient api(svc.base_url());
  const std::string ds_id = api.post("/datasets", {{"csv", blobs_csv(40, 3, 4)}, {"target", "label"},
                                                   {"task", "classification"}})["dataset"]["id"];
  auto s = api.post("/ai/sessions", {{"dataset_id", ds_id}, {"max_runs", 4}, {"update_every", 2}, {"epsilon", 0}, {"cv", 3}});
  EXPECT_EQ(s["launched"].size(), 4u);
  EXPECT_EQ(s["stopped"], "budget");
  for (const auto& id : s["launched"]) EXPECT_EQ(wait_terminal(api, id)["status"], "completed");
  ASSERT_TRUE(svc.notifier().flush(10s));
  std::size_t updates = 0, stops = 0, completed = 0;
  for (const auto& e : rx.events()) {
    updates += e["kind"] == "ai_update";
    stops += e["kind"] == "ai_stopped";
    completed += e["kind"] == "experiment_completed";
  }
  EXPECT_EQ(updates, 2u);
  EXPECT_EQ(stops, 1u);
  EXPECT_EQ(completed, 4u);

  auto off = api.post("/ai/sessions/" + s["id"].get<std::string>() + "/toggle", {{"enabled", false}});
  EXPECT_FALSE(off["enabled"].get<bool>());
}
