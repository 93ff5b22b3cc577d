#include "autolab/ai.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

namespace autolab {

using nlohmann::json;

std::string_view to_string(StopReason r) { return r == StopReason::Budget ? "budget" : "exhausted"; }

std::string_view to_string(AiActionKind k) {
  switch (k) {
    case AiActionKind::Launch: return "launch";
    case AiActionKind::Notify: return "notify";
    case AiActionKind::Idle: return "idle";
    case AiActionKind::Stop: return "stop";
  }
  return "idle";
}

std::string_view to_string(NotificationKind k) {
  switch (k) {
    case NotificationKind::ExperimentCompleted: return "experiment_completed";
    case NotificationKind::AiUpdate: return "ai_update";
    case NotificationKind::AiStopped: return "ai_stopped";
  }
  return "experiment_completed";
}

void to_json(json& j, const AiSession& s) {
  j = json{{"id", s.id},
           {"dataset_id", s.dataset_id},
           {"enabled", s.enabled},
           {"max_runs", s.max_runs},
           {"runs_launched", s.runs_launched},
           {"update_every", s.update_every},
           {"epsilon", s.epsilon},
           {"seed", s.seed},
           {"cv", s.cv},
           {"completions", s.completions},
           {"stopped", s.stopped ? json(to_string(*s.stopped)) : json(nullptr)},
           {"launched", s.launched}};
}

void to_json(json& j, const NotificationEvent& e) {
  j = json{{"kind", to_string(e.kind)}, {"summary", e.summary}, {"timestamp", e.timestamp}};
  if (!e.session_id.empty()) j["session_id"] = e.session_id;
  if (!e.dataset_id.empty()) j["dataset_id"] = e.dataset_id;
  if (!e.experiment_id.empty()) j["experiment_id"] = e.experiment_id;
}

void from_json(const json& j, NotificationEvent& e) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "experiment_completed") e.kind = NotificationKind::ExperimentCompleted;
  else if (kind == "ai_update") e.kind = NotificationKind::AiUpdate;
  else if (kind == "ai_stopped") e.kind = NotificationKind::AiStopped;
  else throw Error(ErrorKind::FormatError, "unknown notification kind '" + kind + "'");
  e.session_id = j.value("session_id", "");
  e.dataset_id = j.value("dataset_id", "");
  e.experiment_id = j.value("experiment_id", "");
  e.summary = j.value("summary", json::object());
  e.timestamp = j.value("timestamp", TimestampMs{0});
}

AiAction ai_step(AiSession& session, const AiContext& ctx) {
  AiAction action;
  if (!session.enabled) return action;
  if (session.update_every > 0 && session.completions_since_notify >= session.update_every) {
    session.completions_since_notify -= session.update_every;
    action.kind = AiActionKind::Notify;
    return action;
  }
  if (session.stopped) return action;
  if (session.runs_launched >= session.max_runs) {
    session.stopped = StopReason::Budget;
    action.kind = AiActionKind::Stop;
    action.reason = StopReason::Budget;
    return action;
  }
  const auto& dataset = *ctx.dataset;
  std::vector<ml::ParamConfig> untried;
  for (auto& cfg : ml::full_grid(dataset.task_type))
    if (!ctx.history.count(cfg.key())) untried.push_back(std::move(cfg));
  if (untried.empty()) {
    session.stopped = StopReason::Exhausted;
    action.kind = AiActionKind::Stop;
    action.reason = StopReason::Exhausted;
    return action;
  }

  Rng rng(derive_seed(session.seed, session.steps++));
  action.kind = AiActionKind::Launch;
  if (rng.uniform() < session.epsilon) {
    action.config = untried[rng.below(untried.size())];
    action.explored = true;
    action.rationale = "exploration: uniformly random untried configuration";
  } else {
    auto recs = ctx.recommender->recommend_for(dataset, ctx.history, 1);
    if (recs.empty())
      recs = rank_by_rules(dataset.meta_features, ctx.recommender->rules(), untried, ctx.history, 1);
    action.config = recs.at(0).config;
    action.rationale = recs[0].rationale;
  }
  ++session.runs_launched;
  return action;
}

json dataset_summary(const ExperimentStore& store, const DatasetRecord& dataset) {
  const std::string metric(ml::primary_metric(dataset.task_type));
  const bool higher = ml::higher_is_better(metric);
  json out = {{"metric", metric}, {"best_config", nullptr}, {"best_metric", nullptr},
              {"best_experiment_id", nullptr}, {"ranking", json::array()}};
  auto records = store.query_experiments({{"dataset_id", dataset.id}, {"status", "completed"}});
  std::optional<double> best;
  for (const auto& r : records) {
    auto v = r.result->metrics.get(metric);
    if (!v) continue;
    if (!best || (higher ? *v > *best : *v < *best)) {
      best = v;
      out["best_config"] = r.config();
      out["best_metric"] = *v;
      out["best_experiment_id"] = r.id;
    }
  }
  if (!best) return out;
  auto rep = compare_algorithms(records, metric);
  std::vector<std::size_t> order(rep.algorithms.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return higher ? rep.mean_metric[a] > rep.mean_metric[b] : rep.mean_metric[a] < rep.mean_metric[b];
  });
  for (auto i : order) out["ranking"].push_back({{"algorithm", rep.algorithms[i]}, {"best_metric", rep.mean_metric[i]}});
  return out;
}

// ---------------------------------------------------------------------------

AiEngine::AiEngine(ExperimentStore& store, Controller& controller, Recommender& recommender, const Clock& clock,
                   NotificationSink sink)
    : store_(store), controller_(controller), recommender_(recommender), clock_(clock), sink_(std::move(sink)) {
  controller_.add_completion_listener([this](const ExperimentRecord& r) { on_completion(r); });
}

AiSession AiEngine::create_session(const AiSessionRequest& request) {
  store_.require_dataset(request.dataset_id);
  if (!(request.epsilon >= 0 && request.epsilon <= 1)) throw Error(ErrorKind::Validation, "epsilon must be in [0,1]");
  if (request.max_runs < 1) throw Error(ErrorKind::Validation, "max_runs must be at least 1");
  if (request.update_every < 1) throw Error(ErrorKind::Validation, "update_every must be at least 1");
  if (request.cv.folds < 2) throw Error(ErrorKind::Validation, "cv folds must be at least 2");
  std::lock_guard lock(mutex_);
  AiSession s;
  s.id = "ai-" + std::to_string(next_id_++);
  s.dataset_id = request.dataset_id;
  s.enabled = request.enabled;
  s.max_runs = request.max_runs;
  s.update_every = request.update_every;
  s.epsilon = request.epsilon;
  s.seed = request.seed;
  s.cv = request.cv;
  auto& stored = sessions_[s.id] = s;
  pump_locked(stored);
  return stored;
}

AiSession AiEngine::toggle(const std::string& session_id, bool enabled) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorKind::Validation, "unknown AI session '" + session_id + "'");
  it->second.enabled = enabled;
  pump_locked(it->second);
  return it->second;
}

std::optional<AiSession> AiEngine::get_session(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  return it->second;
}

std::vector<AiSession> AiEngine::sessions() const {
  std::lock_guard lock(mutex_);
  std::vector<AiSession> out;
  for (const auto& [_, s] : sessions_) out.push_back(s);
  return out;
}

std::vector<AiAction> AiEngine::pump(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw Error(ErrorKind::Validation, "unknown AI session '" + session_id + "'");
  return pump_locked(it->second);
}

std::vector<AiAction> AiEngine::pump_locked(AiSession& session) {
  std::vector<AiAction> actions;
  const auto dataset = store_.require_dataset(session.dataset_id);
  while (true) {
    AiContext ctx{&dataset, history_for(store_, dataset.id), &recommender_};
    AiAction action = ai_step(session, ctx);
    if (action.kind == AiActionKind::Idle) break;
    if (action.kind == AiActionKind::Launch) {
      auto res = controller_.submit({dataset.id, *action.config, session.cv, LaunchedBy::Ai});
      session.launched.push_back(res.experiment_id);
      session_of_experiment_[res.experiment_id] = session.id;
      spdlog::info("AI session {} launched {} ({})", session.id, res.experiment_id, action.config->key());
    } else {
      NotificationEvent ev;
      ev.kind = action.kind == AiActionKind::Notify ? NotificationKind::AiUpdate : NotificationKind::AiStopped;
      ev.session_id = session.id;
      ev.dataset_id = dataset.id;
      ev.summary = dataset_summary(store_, dataset);
      ev.summary["runs_launched"] = session.runs_launched;
      if (action.reason) ev.summary["reason"] = to_string(*action.reason);
      ev.timestamp = clock_.now_ms();
      emit(ev);
    }
    const bool stop = action.kind == AiActionKind::Stop;
    actions.push_back(std::move(action));
    if (stop) break;
  }
  return actions;
}

void AiEngine::on_completion(const ExperimentRecord& record) {
  std::optional<DatasetRecord> dataset;
  if (record.status == ExperimentStatus::Completed) {
    dataset = store_.get_dataset(record.dataset_id);
    if (dataset) recommender_.fold_in(record, *dataset);
  }
  NotificationEvent ev;
  ev.kind = NotificationKind::ExperimentCompleted;
  ev.dataset_id = record.dataset_id;
  ev.experiment_id = record.id;
  ev.summary = {{"status", to_string(record.status)}, {"algorithm", record.algorithm},
                {"parameters", record.config().values}};
  if (record.result) ev.summary["metrics"] = record.result->metrics;
  if (record.error) ev.summary["error"] = *record.error;
  ev.timestamp = clock_.now_ms();

  std::lock_guard lock(mutex_);
  auto owner = session_of_experiment_.find(record.id);
  if (owner != session_of_experiment_.end()) ev.session_id = owner->second;
  emit(ev);
  if (owner == session_of_experiment_.end()) return;
  auto& session = sessions_.at(owner->second);
  ++session.completions;
  ++session.completions_since_notify;
  try {
    pump_locked(session);
  } catch (const std::exception& e) {
    spdlog::error("AI session {} step failed: {}", session.id, e.what());
  }
}

void AiEngine::emit(const NotificationEvent& event) {
  if (!sink_) return;
  try {
    sink_(event);
  } catch (const std::exception& e) {
    spdlog::warn("notification sink failed: {}", e.what());
  }
}

}  // namespace autolab
