#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autolab/common.hpp"
#include "autolab/controller.hpp"
#include "autolab/recommender.hpp"
#include "autolab/store.hpp"

namespace autolab {

enum class StopReason { Budget, Exhausted };

std::string_view to_string(StopReason r);

struct AiSession {
  std::string id;
  std::string dataset_id;
  bool enabled = true;
  std::size_t max_runs = 10;
  std::size_t runs_launched = 0;
  /// Completions per ai_update notification.
  std::size_t update_every = 5;
  double epsilon = 0.1;
  std::uint64_t seed = 0;
  ml::CvSpec cv;

  std::size_t completions = 0;
  std::size_t completions_since_notify = 0;
  std::uint64_t steps = 0;
  std::optional<StopReason> stopped;
  std::vector<std::string> launched;
};

void to_json(nlohmann::json& j, const AiSession& s);

enum class AiActionKind { Launch, Notify, Idle, Stop };

std::string_view to_string(AiActionKind k);

struct AiAction {
  AiActionKind kind = AiActionKind::Idle;
  /// Launch only.
  std::optional<ml::ParamConfig> config;
  bool explored = false;
  std::string rationale;
  /// Stop only.
  std::optional<StopReason> reason;
};

/// What ai_step sees of the world.
struct AiContext {
  const DatasetRecord* dataset = nullptr;
  /// Keys of every configuration already submitted on the dataset.
  std::set<std::string> history;
  const Recommender* recommender = nullptr;
};

/// One decision for the session. Mutates only the step counter, the
/// notification counter (on Notify), runs_launched (on Launch) and `stopped`
/// (on Stop). Check order: disabled, pending notification, already stopped,
/// budget, exhausted grid, epsilon draw.
AiAction ai_step(AiSession& session, const AiContext& ctx);

enum class NotificationKind { ExperimentCompleted, AiUpdate, AiStopped };

std::string_view to_string(NotificationKind k);

struct NotificationEvent {
  NotificationKind kind = NotificationKind::ExperimentCompleted;
  std::string session_id;
  std::string dataset_id;
  std::string experiment_id;
  /// {best_config, best_metric, metric, runs_launched, ranking, reason?}
  nlohmann::json summary = nlohmann::json::object();
  TimestampMs timestamp = 0;
};

void to_json(nlohmann::json& j, const NotificationEvent& e);
void from_json(const nlohmann::json& j, NotificationEvent& e);

using NotificationSink = std::function<void(const NotificationEvent&)>;

/// Best completed result and per-algorithm standings on a dataset.
nlohmann::json dataset_summary(const ExperimentStore& store, const DatasetRecord& dataset);

struct AiSessionRequest {
  std::string dataset_id;
  std::size_t max_runs = 10;
  std::size_t update_every = 5;
  double epsilon = 0.1;
  std::uint64_t seed = 0;
  ml::CvSpec cv;
  bool enabled = true;
};

/// Runs AI sessions: launches through the controller, folds completed
/// experiments into the recommender and emits notifications.
class AiEngine {
 public:
  AiEngine(ExperimentStore& store, Controller& controller, Recommender& recommender, const Clock& clock,
           NotificationSink sink = {});
  AiEngine(const AiEngine&) = delete;
  AiEngine& operator=(const AiEngine&) = delete;

  /// Throws UnknownDataset, Validation.
  AiSession create_session(const AiSessionRequest& request);
  /// Throws Validation (unknown session).
  AiSession toggle(const std::string& session_id, bool enabled);
  std::optional<AiSession> get_session(const std::string& session_id) const;
  std::vector<AiSession> sessions() const;

  /// Steps the session until it idles or stops. Returns the actions taken.
  std::vector<AiAction> pump(const std::string& session_id);

 private:
  void on_completion(const ExperimentRecord& record);
  std::vector<AiAction> pump_locked(AiSession& session);
  void emit(const NotificationEvent& event);

  ExperimentStore& store_;
  Controller& controller_;
  Recommender& recommender_;
  const Clock& clock_;
  NotificationSink sink_;

  mutable std::recursive_mutex mutex_;
  std::map<std::string, AiSession> sessions_;
  std::map<std::string, std::string> session_of_experiment_;
  std::size_t next_id_ = 1;
};

}  // namespace autolab
