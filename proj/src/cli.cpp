#include "autolab/cli.hpp"

#include <CLI11.hpp>
#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "autolab/http.hpp"
#include "autolab/ml/algorithms.hpp"
#include "autolab/ml/metrics.hpp"

namespace autolab {

using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  while (!s.empty() && s.back() == ' ') s.pop_back();
  return s;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::IoError, "cannot write " + path);
  f << text;
  if (!f) throw Error(ErrorKind::IoError, "write to " + path + " failed");
  out << "wrote " << path << "\n";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt(const json& v) { return v.is_number() ? fmt(v.get<double>()) : std::string("-"); }

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string query_string(const std::vector<std::pair<std::string, std::string>>& params) {
  std::string q;
  for (const auto& [k, v] : params) {
    if (v.empty()) continue;
    q += (q.empty() ? "?" : "&") + k + "=" + url_encode(v);
  }
  return q;
}

sigset_t block_termination_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

void wait_for_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
}

std::string server_from_config(const ServiceConfig& cfg) {
  auto [host, port] = parse_listen_addr(cfg.listen_addr);
  if (host == "0.0.0.0" || host.empty()) host = "127.0.0.1";
  return "http://" + host + ":" + std::to_string(port);
}

void print_experiment_line(const json& r, std::ostream& out) {
  const auto task = parse_task_type(r.at("task").get<std::string>());
  const std::string metric(ml::primary_metric(task));
  out << r["id"].get<std::string>() << "  " << r["status"].get<std::string>() << "  " << r["algorithm"].get<std::string>()
      << "  " << r["parameters"].dump();
  if (r["result"].is_object()) out << "  " << metric << "=" << fmt(r["result"]["metrics"].value(metric, json()));
  if (r["error"].is_string()) out << "  error: " << one_line(r["error"].get<std::string>());
  out << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Tabular AutoML assistant: datasets, experiments, recommendations.", "autolab"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string server, token, config_file;
  bool as_json = false;
  app.add_option("--server", server, "Service base URL (default: $AUTOLAB_SERVER, then the config's LISTEN_ADDR)");
  app.add_option("--token", token, "Bearer token (default: $API_TOKEN)");
  app.add_option("--config", config_file, "KEY=value config file");
  app.add_flag("--json", as_json, "Print raw JSON responses");

  // serve
  auto* serve = app.add_subcommand("serve", "Run the service with in-process workers");
  std::string listen, data_dir, kb_path, rules_path, webhook;
  std::size_t workers = 0;
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--data-dir", data_dir, "Data directory");
  auto* serve_workers = serve->add_option("--workers", workers, "In-process worker threads");
  serve->add_option("--kb", kb_path, "Bootstrap knowledge-base TSV");
  serve->add_option("--rules", rules_path, "Expert rules JSON");
  serve->add_option("--webhook", webhook, "Notification webhook URL");

  // worker
  auto* worker = app.add_subcommand("worker", "Run remote workers against a service");
  std::size_t worker_threads = 1;
  std::size_t poll_ms = 500;
  worker->add_option("--workers", worker_threads, "Worker threads")->check(CLI::PositiveNumber);
  worker->add_option("--poll-ms", poll_ms, "Idle poll interval in milliseconds")->check(CLI::PositiveNumber);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Upload a CSV dataset");
  std::string ingest_file, target, task, tags, name;
  ingest->add_option("file", ingest_file, "CSV file")->required()->check(CLI::ExistingFile);
  ingest->add_option("--target", target, "Target column")->required();
  ingest->add_option("--task", task, "classification or regression")
      ->required()
      ->check(CLI::IsMember({"classification", "regression"}));
  ingest->add_option("--tags", tags, "Comma-separated tags");
  ingest->add_option("--name", name, "Dataset name (default: file stem)");

  // run
  auto* run = app.add_subcommand("run", "Launch experiments");
  std::string dataset_id, algorithm;
  std::vector<std::string> params;
  bool grid = false, wait = false;
  std::size_t folds = 5;
  std::uint64_t seed = 42;
  std::size_t timeout_secs = 3600;
  run->add_option("--dataset", dataset_id, "Dataset id")->required();
  run->add_option("--algorithm", algorithm, "Algorithm name");
  run->add_option("--param", params, "Hyperparameter name=value (repeatable)");
  run->add_flag("--grid", grid, "Run the algorithm's full grid (all algorithms if none given)");
  run->add_option("--cv", folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  run->add_option("--seed", seed, "Fold assignment seed");
  run->add_flag("--wait", wait, "Wait for the runs to finish and print their metrics");
  run->add_option("--timeout", timeout_secs, "Seconds to wait with --wait");

  // ls
  auto* ls = app.add_subcommand("ls", "List stored entities");
  ls->require_subcommand(1);
  auto* ls_exp = ls->add_subcommand("experiments", "List experiments");
  std::string status_filter, algorithm_filter;
  ls_exp->add_option("--dataset", dataset_id, "Only this dataset");
  ls_exp->add_option("--status", status_filter, "Only this status");
  ls_exp->add_option("--algorithm", algorithm_filter, "Only this algorithm");
  auto* ls_ds = ls->add_subcommand("datasets", "List datasets");

  // best
  auto* best = app.add_subcommand("best", "Best configurations on datasets carrying any of the tags");
  std::string metric = "accuracy", order;
  std::size_t limit = 0;
  best->add_option("--tags", tags, "Comma-separated tags")->required();
  best->add_option("--metric", metric, "Metric");
  best->add_option("--limit", limit, "Maximum results");
  best->add_option("--order", order, "asc or desc")->check(CLI::IsMember({"asc", "desc"}));

  // recommend
  auto* recommend = app.add_subcommand("recommend", "Recommend configurations for a dataset");
  std::size_t n = 5;
  recommend->add_option("--dataset", dataset_id, "Dataset id")->required();
  recommend->add_option("-n", n, "Number of recommendations")->check(CLI::PositiveNumber);

  // ai
  auto* ai = app.add_subcommand("ai", "Autonomous AI sessions");
  ai->require_subcommand(1);
  auto* ai_start = ai->add_subcommand("start", "Start a session");
  std::size_t max_runs = 10, update_every = 5;
  double epsilon = 0.1;
  ai_start->add_option("--dataset", dataset_id, "Dataset id")->required();
  ai_start->add_option("--max-runs", max_runs, "Run budget")->check(CLI::PositiveNumber);
  ai_start->add_option("--update-every", update_every, "Completions between updates")->check(CLI::PositiveNumber);
  ai_start->add_option("--epsilon", epsilon, "Exploration probability")->check(CLI::Range(0.0, 1.0));
  ai_start->add_option("--seed", seed, "Session seed");
  ai_start->add_option("--cv", folds, "Cross-validation folds")->check(CLI::Range(2, 1000));
  auto* ai_ls = ai->add_subcommand("ls", "List sessions");
  auto* ai_toggle = ai->add_subcommand("toggle", "Enable or disable a session");
  std::string session_id;
  bool on = false, off = false;
  ai_toggle->add_option("session", session_id, "Session id")->required();
  auto* on_flag = ai_toggle->add_flag("--on", on, "Enable");
  ai_toggle->add_flag("--off", off, "Disable")->excludes(on_flag);

  // feedback
  auto* feedback = app.add_subcommand("feedback", "Vote on a completed experiment");
  std::string experiment_id;
  bool up = false, down = false;
  feedback->add_option("experiment", experiment_id, "Experiment id")->required();
  auto* up_flag = feedback->add_flag("--up", up, "Up-vote");
  feedback->add_flag("--down", down, "Down-vote")->excludes(up_flag);

  // report
  auto* report = app.add_subcommand("report", "Reports");
  report->require_subcommand(1);
  std::string output = "-";
  auto* heatmap = report->add_subcommand("heatmap", "Algorithm x dataset heatmap (.svg or JSON by extension)");
  heatmap->add_option("--metric", metric, "Metric")->required();
  heatmap->add_option("-o,--output", output, "Output file, - for stdout");
  auto* roc = report->add_subcommand("roc", "ROC curve of an experiment (.svg, .csv or JSON by extension)");
  roc->add_option("experiment", experiment_id, "Experiment id")->required();
  roc->add_option("-o,--output", output, "Output file, - for stdout");
  auto* compare = report->add_subcommand("compare", "Average ranks and wins per algorithm");
  compare->add_option("--metric", metric, "Metric")->required();

  // kb
  auto* kb = app.add_subcommand("kb", "Knowledge base");
  kb->require_subcommand(1);
  auto* kb_load = kb->add_subcommand("load", "Upload a knowledge-base TSV");
  std::string kb_file;
  kb_load->add_option("file", kb_file, "TSV file")->required()->check(CLI::ExistingFile);
  auto* kb_show = kb->add_subcommand("show", "Knowledge-base size and rules");

  auto* export_table = app.add_subcommand("export-table", "Export every experiment as TSV");
  export_table->add_option("-o,--output", output, "Output file, - for stdout");

  auto* status = app.add_subcommand("status", "Service health and queue counts");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "autolab: usage: " << one_line(e.what()) << " (see --help)\n";
    return kExitUsage;
  }

  try {
    const std::optional<std::filesystem::path> cfg_path =
        config_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_file);

    if (*serve) {
      auto cfg = load_service_config(cfg_path, env);
      if (!listen.empty()) cfg.listen_addr = listen;
      if (!data_dir.empty()) cfg.data_dir = data_dir;
      if (serve_workers->count()) cfg.local_workers = workers;
      else if (cfg.local_workers == 0) cfg.local_workers = std::max(1u, std::thread::hardware_concurrency() / 2);
      if (!kb_path.empty()) cfg.kb_path = kb_path;
      if (!rules_path.empty()) cfg.rules_path = rules_path;
      if (!webhook.empty()) cfg.webhook_url = webhook;
      if (!token.empty()) cfg.api_token = token;
      const auto signals = block_termination_signals();
      Service svc(cfg);
      svc.start();
      out << "serving on " << svc.base_url() << " with " << cfg.local_workers << " worker(s); data in "
          << cfg.data_dir.string() << std::endl;
      wait_for_signal(signals);
      svc.stop();
      return kExitOk;
    }

    if (server.empty()) server = env("AUTOLAB_SERVER").value_or("");
    if (server.empty() || token.empty()) {
      const auto cfg = load_service_config(cfg_path, env);
      if (server.empty()) server = server_from_config(cfg);
      if (token.empty()) token = cfg.api_token;
    }
    ApiClient api(server, token);
    auto print_json = [&](const json& j) { out << j.dump(2) << "\n"; };

    if (*worker) {
      const auto signals = block_termination_signals();
      WorkerPoolOptions opts;
      opts.workers = worker_threads;
      opts.poll_interval = std::chrono::milliseconds(poll_ms);
      opts.name_prefix = "remote";
      WorkerPool pool(std::make_shared<HttpTransport>(server, token), opts);
      pool.start();
      out << worker_threads << " worker(s) polling " << server << std::endl;
      wait_for_signal(signals);
      pool.stop();
      out << "completed " << pool.jobs_completed() << " job(s)\n";
      return kExitOk;
    }

    if (*ingest) {
      const auto csv = read_file(ingest_file);
      if (name.empty()) name = std::filesystem::path(ingest_file).stem().string();
      auto res = api.post_multipart("/datasets", {{"file", csv, std::filesystem::path(ingest_file).filename().string(), "text/csv"},
                                                  {"name", name, "", ""},
                                                  {"target", target, "", ""},
                                                  {"task", task, "", ""},
                                                  {"tags", tags, "", ""}});
      if (res.status < 200 || res.status >= 300) throw_api_error(res);
      const auto j = json::parse(res.body);
      if (as_json) {
        print_json(j);
      } else {
        const auto& d = j["dataset"];
        out << "dataset " << d["id"].get<std::string>() << " " << d["name"].get<std::string>() << ": "
            << d["n_rows"].get<std::size_t>() << " rows, " << d["columns"].size() - 1 << " features ("
            << (j["created"].get<bool>() ? "created" : "already present") << ")\n";
      }
      return kExitOk;
    }

    if (*run) {
      if (algorithm.empty() && !grid) throw UsageError("--algorithm is required unless --grid is given");
      if (grid && !params.empty()) throw UsageError("--param cannot be combined with --grid");
      json body = {{"dataset_id", dataset_id}, {"grid", grid}, {"cv", folds}, {"seed", seed}};
      if (!algorithm.empty()) {
        const auto dataset = api.get("/datasets/" + url_encode(dataset_id));
        const std::string task_name = dataset.at("task_type");
        const auto algos = api.get("/algorithms?task=" + task_name);
        const json* spec = nullptr;
        std::string names;
        for (const auto& a : algos) {
          names += (names.empty() ? "" : ", ") + a["name"].get<std::string>();
          if (a["name"] == algorithm) spec = &a;
        }
        if (!spec) throw UsageError("unknown " + task_name + " algorithm '" + algorithm + "' (choose from " + names + ")");
        ml::ParamConfig cfg;
        try {
          cfg = ml::config_from_assignments(algorithm, params);
        } catch (const Error& e) {
          throw UsageError(e.what());
        }
        for (const auto& [pname, _] : cfg.values) {
          bool known = false;
          for (const auto& p : (*spec)["params"]) known = known || p["name"] == pname;
          if (!known) throw UsageError("algorithm '" + algorithm + "' has no parameter '" + pname + "'");
        }
        body["algorithm"] = algorithm;
        body["parameters"] = cfg.values;
      }
      const auto res = api.post("/experiments", body);
      if (!wait) {
        if (as_json) print_json(res);
        else
          for (const auto& s : res["submitted"])
            out << s["experiment_id"].get<std::string>() << "  job " << s["job_id"].get<std::string>()
                << (s["duplicate"].get<bool>() ? "  (already submitted)" : "") << "\n";
        return kExitOk;
      }
      const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(timeout_secs);
      json records = json::array();
      std::size_t failed = 0;
      for (const auto& s : res["submitted"]) {
        json rec;
        while (true) {
          rec = api.get("/experiments/" + url_encode(s["experiment_id"].get<std::string>()));
          if (rec["status"] == "completed" || rec["status"] == "failed") break;
          if (std::chrono::steady_clock::now() > deadline)
            throw Error(ErrorKind::IoError, "timed out waiting for " + s["experiment_id"].get<std::string>());
          std::this_thread::sleep_for(std::chrono::milliseconds(200));
        }
        failed += rec["status"] == "failed";
        records.push_back(rec);
      }
      if (as_json) print_json(records);
      else
        for (const auto& r : records) print_experiment_line(r, out);
      if (failed) throw Error(ErrorKind::NumericalFailure, std::to_string(failed) + " experiment(s) failed");
      return kExitOk;
    }

    if (*ls_exp) {
      const auto recs = api.get("/experiments" + query_string({{"dataset_id", dataset_id},
                                                               {"status", status_filter},
                                                               {"algorithm", algorithm_filter}}));
      if (as_json) print_json(recs);
      else
        for (const auto& r : recs) print_experiment_line(r, out);
      return kExitOk;
    }
    if (*ls_ds) {
      const auto ds = api.get("/datasets");
      if (as_json) print_json(ds);
      else
        for (const auto& d : ds) {
          std::string t;
          for (const auto& tag : d["tags"]) t += (t.empty() ? "" : ",") + tag.get<std::string>();
          out << d["id"].get<std::string>() << "  " << d["name"].get<std::string>() << "  "
              << d["task_type"].get<std::string>() << "  " << d["n_rows"].get<std::size_t>() << " rows  [" << t << "]\n";
        }
      return kExitOk;
    }

    if (*best) {
      if (!ml::is_metric_name(metric)) throw UsageError("unknown metric '" + metric + "'");
      const auto res = api.get("/best" + query_string({{"tags", tags},
                                                        {"metric", metric},
                                                        {"limit", limit ? std::to_string(limit) : ""},
                                                        {"order", order}}));
      if (as_json) print_json(res);
      else
        for (const auto& b : res["results"])
          out << b["experiment_id"].get<std::string>() << "  " << b["algorithm"].get<std::string>() << "  "
              << b["parameters"].dump() << "  " << metric << "=" << fmt(b["metric_value"]) << "  dataset "
              << b["dataset_id"].get<std::string>() << "\n";
      return kExitOk;
    }

    if (*recommend) {
      const auto res = api.get("/recommendations" + query_string({{"dataset_id", dataset_id}, {"n", std::to_string(n)}}));
      if (as_json) print_json(res);
      else
        for (const auto& r : res["recommendations"])
          out << r["rank"].get<std::size_t>() << ". " << r["config"]["algorithm"].get<std::string>() << " "
              << r["config"]["values"].dump() << "  score=" << fmt(r["score"]) << "  expected=" << fmt(r["expected_score"])
              << "\n   " << r["rationale"].get<std::string>() << "\n";
      return kExitOk;
    }

    if (*ai_start) {
      const auto s = api.post("/ai/sessions", {{"dataset_id", dataset_id},
                                               {"max_runs", max_runs},
                                               {"update_every", update_every},
                                               {"epsilon", epsilon},
                                               {"seed", seed},
                                               {"cv", folds}});
      if (as_json) print_json(s);
      else {
        out << "session " << s["id"].get<std::string>() << ": launched " << s["launched"].size() << " run(s)";
        if (s["stopped"].is_string()) out << ", stopped (" << s["stopped"].get<std::string>() << ")";
        out << "\n";
        for (const auto& id : s["launched"]) out << "  " << id.get<std::string>() << "\n";
      }
      return kExitOk;
    }
    if (*ai_ls) {
      const auto all = api.get("/ai/sessions");
      if (as_json) print_json(all);
      else
        for (const auto& s : all)
          out << s["id"].get<std::string>() << "  dataset " << s["dataset_id"].get<std::string>() << "  "
              << (s["enabled"].get<bool>() ? "enabled" : "disabled") << "  " << s["runs_launched"].get<std::size_t>()
              << "/" << s["max_runs"].get<std::size_t>() << " runs"
              << (s["stopped"].is_string() ? "  stopped (" + s["stopped"].get<std::string>() + ")" : "") << "\n";
      return kExitOk;
    }
    if (*ai_toggle) {
      if (on == off) throw UsageError("give exactly one of --on or --off");
      const auto s = api.post("/ai/sessions/" + url_encode(session_id) + "/toggle", {{"enabled", on}});
      if (as_json) print_json(s);
      else out << "session " << s["id"].get<std::string>() << " " << (on ? "enabled" : "disabled") << "\n";
      return kExitOk;
    }

    if (*feedback) {
      if (up == down) throw UsageError("give exactly one of --up or --down");
      const auto res = api.post("/experiments/" + url_encode(experiment_id) + "/feedback", {{"vote", up ? "up" : "down"}});
      if (as_json) print_json(res);
      else
        out << experiment_id << " feedback " << (up ? "up" : "down") << "; knowledge-base feedback now "
            << res["kb_entry"]["feedback_delta"].get<int>() << "\n";
      return kExitOk;
    }

    if (*heatmap) {
      if (!ml::is_metric_name(metric)) throw UsageError("unknown metric '" + metric + "'");
      const bool svg = ends_with(output, ".svg");
      const auto text = api.get_text("/reports/heatmap" + query_string({{"metric", metric}, {"format", svg ? "svg" : ""}}));
      write_output(output, svg ? text : json::parse(text).dump(2) + "\n", out);
      return kExitOk;
    }
    if (*roc) {
      const std::string format = ends_with(output, ".svg") ? "svg" : ends_with(output, ".csv") ? "csv" : "json";
      const auto text = api.get_text("/experiments/" + url_encode(experiment_id) + "/roc?format=" + format);
      write_output(output, format == "json" ? json::parse(text).dump(2) + "\n" : text, out);
      return kExitOk;
    }
    if (*compare) {
      if (!ml::is_metric_name(metric)) throw UsageError("unknown metric '" + metric + "'");
      const auto rep = api.get("/reports/compare" + query_string({{"metric", metric}}));
      if (as_json) print_json(rep);
      else
        for (std::size_t i = 0; i < rep["algorithms"].size(); ++i) {
          std::size_t wins = 0;
          for (const auto& w : rep["wins"][i]) wins += w.get<std::size_t>();
          out << rep["algorithms"][i].get<std::string>() << "  avg_rank=" << fmt(rep["average_rank"][i])
              << "  pairwise_wins=" << wins << "  mean=" << fmt(rep["mean_metric"][i]) << "\n";
        }
      return kExitOk;
    }

    if (*kb_load) {
      const auto res = api.request("POST", "/kb", read_file(kb_file), "text/tab-separated-values");
      if (res.status < 200 || res.status >= 300) throw_api_error(res);
      const auto j = json::parse(res.body);
      if (as_json) print_json(j);
      else {
        out << "loaded " << j["loaded"].get<std::size_t>() << " entries"
            << (j["duplicate"].get<bool>() ? " (file already loaded)" : "") << "; knowledge base now "
            << j["kb_size"].get<std::size_t>() << " entries\n";
        for (const auto& e : j["errors"])
          out << "  skipped line " << e["line"].get<std::size_t>() << ": " << e["message"].get<std::string>() << "\n";
      }
      return kExitOk;
    }
    if (*kb_show) {
      const auto j = api.get("/kb");
      if (as_json) print_json(j);
      else
        out << j["size"].get<std::size_t>() << " entries (" << j["bootstrap"].get<std::size_t>() << " bootstrap, "
            << j["live"].get<std::size_t>() << " live), " << j["rules"].size() << " rules\n";
      return kExitOk;
    }

    if (*export_table) {
      write_output(output, api.get_text("/export/table"), out);
      return kExitOk;
    }

    if (*status) {
      const auto h = api.get("/health");
      if (as_json) print_json(h);
      else
        out << h["status"].get<std::string>() << ": " << h["experiments"].get<std::size_t>() << " experiments, "
            << h["jobs"]["queued"].get<std::size_t>() << " queued, " << h["jobs"]["leased"].get<std::size_t>()
            << " running, knowledge base " << h["kb_size"].get<std::size_t>() << " entries\n";
      return kExitOk;
    }
    throw UsageError("no command given");
  } catch (const UsageError& e) {
    err << "autolab: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "autolab: " << to_string(e.kind()) << ": " << one_line(e.what()) << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "autolab: " << one_line(e.what()) << "\n";
    return kExitDomain;
  }
}

}  // namespace autolab
