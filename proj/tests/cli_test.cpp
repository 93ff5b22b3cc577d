#include <gtest/gtest.h>

#include <sys/wait.h>

#include <fstream>
#include <sstream>

#include "autolab/cli.hpp"
#include "fixtures.hpp"
#include "store_fixtures.hpp"

using namespace autolab;
using namespace autolab::testing;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

std::optional<std::string> no_env(const std::string&) { return std::nullopt; }

CliResult cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err, no_env);
  return {code, out.str(), err.str()};
}

std::size_t lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServiceConfig c;
    c.listen_addr = "127.0.0.1:0";
    c.data_dir = dir_.path() / "data";
    c.local_workers = 2;
    svc_ = std::make_unique<Service>(c);
    svc_->start();
  }

  CliResult call(std::vector<std::string> args) {
    args.insert(args.begin(), {"--server", svc_->base_url()});
    return cli(args);
  }

  std::string ingest_blobs() {
    const auto csv = dir_.path() / "blobs.csv";
    std::ofstream(csv) << blobs_csv(60, 3, 7);
    auto r = call({"ingest", csv.string(), "--target", "label", "--task", "classification", "--tags", "toy"});
    EXPECT_EQ(r.code, 0) << r.err;
    return svc_->store().list_datasets().at(0).id;
  }

  TempDir dir_{"cli"};
  std::unique_ptr<Service> svc_;
};

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  auto r = cli({"ingest", "/definitely/missing.csv", "--target", "y", "--task", "classification"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_EQ(lines(r.err), 1u);
  EXPECT_EQ(cli({"best", "--tags", "x", "--order", "sideways"}).code, kExitUsage);
  auto help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("recommend"), std::string::npos);
}

TEST(Cli, UnreachableServerIsDomainError) {
  auto r = cli({"--server", "http://127.0.0.1:1", "status"});
  EXPECT_EQ(r.code, kExitDomain);
  EXPECT_EQ(lines(r.err), 1u);
  EXPECT_NE(r.err.find("IoError"), std::string::npos);
}

TEST_F(CliTest, IngestRunListAndReport) {
  const auto ds = ingest_blobs();

  auto bad = call({"run", "--dataset", ds, "--algorithm", "quantum_forest"});
  EXPECT_EQ(bad.code, kExitUsage);
  EXPECT_EQ(lines(bad.err), 1u);
  EXPECT_NE(bad.err.find("quantum_forest"), std::string::npos);
  EXPECT_EQ(call({"run", "--dataset", ds, "--algorithm", "knn", "--param", "depth=3"}).code, kExitUsage);
  EXPECT_EQ(call({"run", "--dataset", ds, "--algorithm", "knn", "--param", "k"}).code, kExitUsage);
  EXPECT_EQ(call({"run", "--dataset", ds}).code, kExitUsage);
  EXPECT_EQ(call({"run", "--dataset", "missing", "--algorithm", "knn"}).code, kExitDomain);
  EXPECT_EQ(call({"run", "--dataset", ds, "--algorithm", "knn", "--param", "k=4"}).code, kExitDomain);

  auto ok = call({"run", "--dataset", ds, "--algorithm", "knn", "--param", "k=3", "--param", "weights=distance",
                  "--cv", "3", "--wait"});
  ASSERT_EQ(ok.code, 0) << ok.err;
  EXPECT_NE(ok.out.find("completed"), std::string::npos);
  EXPECT_NE(ok.out.find("balanced_accuracy="), std::string::npos);

  auto ls = call({"ls", "experiments", "--dataset", ds});
  EXPECT_EQ(ls.code, 0);
  EXPECT_EQ(lines(ls.out), 1u);
  auto js = call({"--json", "ls", "datasets"});
  EXPECT_EQ(nlohmann::json::parse(js.out).at(0)["id"], ds);

  const auto svg = dir_.path() / "heat.svg";
  EXPECT_EQ(call({"report", "heatmap", "--metric", "accuracy", "-o", svg.string()}).code, 0);
  EXPECT_NE(slurp(svg).find("<svg"), std::string::npos);
  EXPECT_EQ(call({"report", "heatmap", "--metric", "speed"}).code, kExitUsage);

  const auto tsv = dir_.path() / "table.tsv";
  EXPECT_EQ(call({"export-table", "-o", tsv.string()}).code, 0);
  EXPECT_EQ(lines(slurp(tsv)), 2u);

  const auto exp_id = svc_->store().query_experiments().at(0).id;
  const auto roc = dir_.path() / "roc.csv";
  EXPECT_EQ(call({"report", "roc", exp_id, "-o", roc.string()}).code, 0);
  EXPECT_EQ(slurp(roc).rfind("fpr,tpr\n", 0), 0u);

  EXPECT_EQ(call({"feedback", exp_id}).code, kExitUsage);
  EXPECT_EQ(call({"feedback", exp_id, "--up", "--down"}).code, kExitUsage);
  auto fb = call({"feedback", exp_id, "--down"});
  EXPECT_EQ(fb.code, 0) << fb.err;
  EXPECT_NE(fb.out.find("now -1"), std::string::npos);
  EXPECT_EQ(call({"feedback", "exp-none", "--up"}).code, kExitDomain);
}

TEST_F(CliTest, RecommendFallsBackToRulesOnEmptyKnowledgeBase) {
  const auto ds = ingest_blobs();
  auto r = call({"recommend", "--dataset", ds, "-n", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("1. logistic_regression", 0), 0u) << r.out;
  EXPECT_NE(r.out.find("expert rules"), std::string::npos);
}

TEST_F(CliTest, BestQueryOnProstateFixture) {
  for (const auto& rec : prostate_fixture()) svc_->store().put_experiment(rec);
  auto r = call({"best", "--tags", "prostate", "--metric", "accuracy", "--limit", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("exp-p3  random_forest", 0), 0u) << r.out;
}

TEST_F(CliTest, KnowledgeBaseAndAiSession) {
  const auto ds = ingest_blobs();
  const auto kb = dir_.path() / "kb.tsv";
  {
    std::ofstream f(kb);
    for (std::size_t i = 0; i < kb_columns().size(); ++i) f << (i ? "\t" : "") << kb_columns()[i];
    f << "\nd1\t100\t4\t2\t1\t0\t0.1\t0\t0\t4.6\t1.4\tsvm\t{}\tbalanced_accuracy\t0.8\n";
  }
  auto load = call({"kb", "load", kb.string()});
  ASSERT_EQ(load.code, 0) << load.err;
  EXPECT_NE(load.out.find("loaded 1 entries"), std::string::npos);
  EXPECT_NE(call({"kb", "load", kb.string()}).out.find("already loaded"), std::string::npos);

  auto ai = call({"ai", "start", "--dataset", ds, "--max-runs", "2", "--epsilon", "0", "--cv", "3"});
  ASSERT_EQ(ai.code, 0) << ai.err;
  EXPECT_NE(ai.out.find("launched 2 run(s), stopped (budget)"), std::string::npos) << ai.out;
  EXPECT_EQ(call({"ai", "toggle", "ai-1"}).code, kExitUsage);
  EXPECT_EQ(call({"ai", "toggle", "ai-1", "--off"}).code, 0);
  EXPECT_NE(call({"ai", "ls"}).out.find("disabled"), std::string::npos);
  EXPECT_EQ(call({"ai", "start", "--dataset", ds, "--epsilon", "2"}).code, kExitUsage);
}

TEST_F(CliTest, BinaryMapsExitCodes) {
  const auto ds = ingest_blobs();
  const std::string bin = AUTOLAB_CLI_BINARY;
  auto status = [&](const std::string& tail) {
    const int raw = std::system((bin + " --server " + svc_->base_url() + " " + tail + " >/dev/null 2>&1").c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  };
  EXPECT_EQ(status("status"), 0);
  EXPECT_EQ(status("run --dataset " + ds + " --algorithm nope"), 2);
  EXPECT_EQ(status("feedback exp-none --up"), 1);
}
