#include "autolab/recommender.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace autolab {

using nlohmann::json;

std::string_view to_string(KbSource s) { return s == KbSource::Bootstrap ? "bootstrap" : "live"; }

void to_json(json& j, const KBEntry& e) {
  j = json{{"dataset_name", e.dataset_name},
           {"meta_features", e.meta_features},
           {"algorithm", e.algorithm},
           {"parameters", e.parameters},
           {"metric_name", e.metric_name},
           {"metric_value", e.metric_value},
           {"source", to_string(e.source)},
           {"feedback_delta", e.feedback_delta}};
  if (!e.experiment_id.empty()) j["experiment_id"] = e.experiment_id;
}

// ---------------------------------------------------------------------------
// KnowledgeBase

void KnowledgeBase::add(KBEntry entry) {
  entries_.push_back(std::move(entry));
  recompute();
}

void KnowledgeBase::add_all(const std::vector<KBEntry>& entries) {
  entries_.insert(entries_.end(), entries.begin(), entries.end());
  recompute();
}

std::size_t KnowledgeBase::adjust_feedback(const std::string& experiment_id, int delta) {
  std::size_t changed = 0;
  for (auto& e : entries_)
    if (!e.experiment_id.empty() && e.experiment_id == experiment_id) {
      e.feedback_delta += delta;
      ++changed;
    }
  return changed;
}

bool KnowledgeBase::has_experiment(const std::string& experiment_id) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const KBEntry& e) { return e.experiment_id == experiment_id; });
}

void KnowledgeBase::recompute() {
  constexpr std::size_t K = MetaFeatures::kSize;
  stats_.mean.fill(0);
  stats_.stddev.fill(1);
  if (entries_.empty()) return;
  const double n = static_cast<double>(entries_.size());
  for (const auto& e : entries_) {
    const auto a = e.meta_features.to_array();
    for (std::size_t k = 0; k < K; ++k) stats_.mean[k] += a[k];
  }
  for (auto& m : stats_.mean) m /= n;
  std::array<double, K> ss{};
  for (const auto& e : entries_) {
    const auto a = e.meta_features.to_array();
    for (std::size_t k = 0; k < K; ++k) ss[k] += (a[k] - stats_.mean[k]) * (a[k] - stats_.mean[k]);
  }
  for (std::size_t k = 0; k < K; ++k) {
    const double sd = std::sqrt(ss[k] / n);
    stats_.stddev[k] = sd > 1e-12 ? sd : 1.0;
  }
}

// ---------------------------------------------------------------------------
// Bootstrap file

const std::vector<std::string>& kb_columns() {
  static const std::vector<std::string> cols{
      "dataset",        "n_instances",   "n_features",  "n_classes",     "imbalance_ratio",
      "frac_categorical", "mean_abs_corr", "mean_skew",   "mean_kurtosis", "log_instances",
      "log_features",   "algorithm",     "parameters",  "metric_name",   "metric_value"};
  return cols;
}

namespace {

std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.emplace_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return out;
}

bool bounded_metric(std::string_view metric) { return metric != "r2" && metric != "mse"; }

std::string fmt_number(double v) {
  // Shortest text that reads back to the same double.
  return json(v).dump();
}

}  // namespace

KbLoadResult parse_knowledge_base(std::string_view text) {
  KbLoadResult out;
  std::vector<KBEntry> rows;
  std::size_t pos = 0, line_no = 0;
  bool header_seen = false;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (nl >= text.size()) break;
      continue;
    }
    auto cells = split_tabs(line);
    if (!header_seen) {
      for (auto& c : cells) c = trim(c);
      if (cells != kb_columns()) {
        std::string missing;
        for (const auto& col : kb_columns())
          if (std::find(cells.begin(), cells.end(), col) == cells.end()) missing += (missing.empty() ? "" : ", ") + col;
        throw Error(ErrorKind::FormatError, missing.empty() ? "knowledge-base header columns are out of order"
                                                            : "knowledge-base header lacks: " + missing);
      }
      header_seen = true;
      continue;
    }
    auto fail = [&](const std::string& msg) { out.errors.push_back({line_no, msg}); };
    if (cells.size() != kb_columns().size()) {
      fail("expected " + std::to_string(kb_columns().size()) + " fields, found " + std::to_string(cells.size()));
      continue;
    }
    KBEntry e;
    e.dataset_name = trim(cells[0]);
    if (e.dataset_name.empty()) {
      fail("empty dataset name");
      continue;
    }
    std::array<double, MetaFeatures::kSize> meta{};
    bool ok = true;
    for (std::size_t k = 0; k < MetaFeatures::kSize && ok; ++k) {
      auto v = parse_number(trim(cells[1 + k]));
      if (!v) {
        fail("field " + kb_columns()[1 + k] + " is not a finite number");
        ok = false;
      } else {
        meta[k] = *v;
      }
    }
    if (!ok) continue;
    e.meta_features = MetaFeatures::from_array(meta);
    e.algorithm = trim(cells[11]);
    if (e.algorithm.empty()) {
      fail("empty algorithm");
      continue;
    }
    json params = json::parse(cells[12], nullptr, false);
    if (params.is_discarded() || !params.is_object()) {
      fail("parameters is not a JSON object");
      continue;
    }
    for (const auto& [k, v] : params.items()) e.parameters[k] = v;
    e.metric_name = trim(cells[13]);
    if (!ml::is_metric_name(e.metric_name)) {
      fail("unknown metric '" + e.metric_name + "'");
      continue;
    }
    auto value = parse_number(trim(cells[14]));
    if (!value) {
      fail("metric_value is not a finite number");
      continue;
    }
    if (bounded_metric(e.metric_name) && (*value < 0 || *value > 1)) {
      fail("metric_value outside [0,1]");
      continue;
    }
    e.metric_value = *value;
    rows.push_back(std::move(e));
    if (nl >= text.size()) break;
  }
  if (!header_seen) throw Error(ErrorKind::FormatError, "knowledge-base file has no header");
  out.kb.add_all(rows);
  return out;
}

KbLoadResult load_knowledge_base(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return parse_knowledge_base(os.str());
}

std::string format_knowledge_base(const std::vector<KBEntry>& entries) {
  std::ostringstream os;
  const auto& cols = kb_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "\t" : "") << cols[i];
  os << "\n";
  for (const auto& e : entries) {
    os << e.dataset_name;
    for (double v : e.meta_features.to_array()) os << "\t" << fmt_number(v);
    json params = json::object();
    for (const auto& [k, v] : e.parameters) params[k] = v;
    os << "\t" << e.algorithm << "\t" << params.dump() << "\t" << e.metric_name << "\t" << fmt_number(e.metric_value)
       << "\n";
  }
  return os.str();
}

std::string kb_dataset_name(const DatasetRecord& dataset) { return dataset.name + "@" + dataset.id.substr(0, 12); }

std::vector<KBEntry> live_entries(const ExperimentRecord& record, const DatasetRecord& dataset) {
  std::vector<KBEntry> out;
  if (record.status != ExperimentStatus::Completed || !record.result) return out;
  for (const auto& metric : ml::metric_names()) {
    auto v = record.result->metrics.get(metric);
    if (!v || !std::isfinite(*v)) continue;
    KBEntry e;
    e.dataset_name = kb_dataset_name(dataset);
    e.meta_features = dataset.meta_features;
    e.algorithm = record.algorithm;
    e.parameters = record.parameters;
    e.metric_name = metric;
    e.metric_value = *v;
    e.source = KbSource::Live;
    e.experiment_id = record.id;
    out.push_back(std::move(e));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rules

namespace {

CompareOp parse_op(const std::string& s) {
  if (s == "<") return CompareOp::Less;
  if (s == "<=" || s == "≤") return CompareOp::LessEqual;
  if (s == ">") return CompareOp::Greater;
  if (s == ">=" || s == "≥") return CompareOp::GreaterEqual;
  if (s == "=" || s == "==") return CompareOp::Equal;
  throw Error(ErrorKind::FormatError, "unknown comparison operator '" + s + "'");
}

std::string_view op_text(CompareOp op) {
  switch (op) {
    case CompareOp::Less: return "<";
    case CompareOp::LessEqual: return "<=";
    case CompareOp::Greater: return ">";
    case CompareOp::GreaterEqual: return ">=";
    case CompareOp::Equal: return "=";
  }
  return "=";
}

RuleAction parse_action(const std::string& s) {
  if (s == "boost") return RuleAction::Boost;
  if (s == "penalize") return RuleAction::Penalize;
  if (s == "exclude") return RuleAction::Exclude;
  throw Error(ErrorKind::FormatError, "unknown rule action '" + s + "'");
}

std::string_view action_text(RuleAction a) {
  switch (a) {
    case RuleAction::Boost: return "boost";
    case RuleAction::Penalize: return "penalize";
    case RuleAction::Exclude: return "exclude";
  }
  return "boost";
}

bool json_equal(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return a.get<double>() == b.get<double>();
  return a == b;
}

}  // namespace

bool Condition::holds(const MetaFeatures& meta) const {
  const double x = meta.to_array()[*MetaFeatures::field_index(field)];
  switch (op) {
    case CompareOp::Less: return x < value;
    case CompareOp::LessEqual: return x <= value;
    case CompareOp::Greater: return x > value;
    case CompareOp::GreaterEqual: return x >= value;
    case CompareOp::Equal: return x == value;
  }
  return false;
}

bool RuleTarget::matches(const ml::ParamConfig& config) const {
  if (config.algorithm != algorithm) return false;
  if (!param) return true;
  auto it = config.values.find(*param);
  return it != config.values.end() && json_equal(it->second, value);
}

bool ExpertRule::fires(const MetaFeatures& meta) const {
  return std::all_of(condition.begin(), condition.end(), [&](const Condition& c) { return c.holds(meta); });
}

std::vector<ExpertRule> parse_rules(const json& doc) {
  if (!doc.is_array()) throw Error(ErrorKind::FormatError, "rule file must hold a JSON array");
  std::vector<ExpertRule> rules;
  std::set<std::string> seen;
  for (const auto& item : doc) {
    try {
      ExpertRule r;
      r.rule_id = item.at("rule_id").get<std::string>();
      if (r.rule_id.empty() || !seen.insert(r.rule_id).second)
        throw Error(ErrorKind::FormatError, "rule ids must be nonempty and unique");
      for (const auto& c : item.at("condition")) {
        Condition cond{c.at("field").get<std::string>(), parse_op(c.at("op").get<std::string>()),
                       c.at("value").get<double>()};
        if (!MetaFeatures::field_index(cond.field))
          throw Error(ErrorKind::FormatError, "unknown meta-feature '" + cond.field + "'");
        r.condition.push_back(cond);
      }
      r.action = parse_action(item.at("action").get<std::string>());
      const auto& t = item.at("target");
      r.target.algorithm = t.at("algorithm").get<std::string>();
      const bool cls = ml::has_algorithm(TaskType::Classification, r.target.algorithm);
      const bool reg = ml::has_algorithm(TaskType::Regression, r.target.algorithm);
      if (!cls && !reg) throw Error(ErrorKind::FormatError, "unknown algorithm '" + r.target.algorithm + "'");
      if (t.contains("param") && !t["param"].is_null()) {
        r.target.param = t["param"].get<std::string>();
        r.target.value = t.at("value");
        const auto& spec = ml::find_algorithm(cls ? TaskType::Classification : TaskType::Regression, r.target.algorithm);
        const auto* p = spec.find_param(*r.target.param);
        if (!p) throw Error(ErrorKind::FormatError, "algorithm '" + r.target.algorithm + "' has no parameter '" +
                                                        *r.target.param + "'");
        const bool allowed = std::any_of(p->allowed.begin(), p->allowed.end(),
                                         [&](const json& v) { return json_equal(v, r.target.value); });
        if (!allowed) throw Error(ErrorKind::FormatError, "value " + r.target.value.dump() + " is not on the menu for " +
                                                              r.target.algorithm + "." + *r.target.param);
      }
      r.weight = item.value("weight", 0.0);
      if (!(r.weight >= 0) || !std::isfinite(r.weight)) throw Error(ErrorKind::FormatError, "weight must be >= 0");
      r.description = item.value("description", "");
      rules.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::FormatError, std::string("malformed rule: ") + e.what());
    }
  }
  return rules;
}

std::vector<ExpertRule> load_rules(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorKind::FormatError, path.string() + " is not valid JSON");
  return parse_rules(doc);
}

void to_json(json& j, const ExpertRule& r) {
  json cond = json::array();
  for (const auto& c : r.condition) cond.push_back({{"field", c.field}, {"op", op_text(c.op)}, {"value", c.value}});
  json target = {{"algorithm", r.target.algorithm}};
  if (r.target.param) {
    target["param"] = *r.target.param;
    target["value"] = r.target.value;
  }
  j = json{{"rule_id", r.rule_id}, {"condition", cond}, {"action", action_text(r.action)},
           {"target", target},     {"weight", r.weight}, {"description", r.description}};
}

// ---------------------------------------------------------------------------
// recommend

void to_json(json& j, const Recommendation& r) {
  j = json{{"config", r.config},
           {"expected_score", r.expected_score ? json(*r.expected_score) : json(nullptr)},
           {"score", r.score},
           {"rationale", r.rationale},
           {"rank", r.rank}};
}

namespace {

struct Candidate {
  ml::ParamConfig config;
  std::string key;
  std::optional<double> expected;
  double score = 0;
  std::size_t order = 0;  // stable tie-break position
  std::vector<std::string> fired;
};

/// Rules sorted by weight descending, file order among equals.
std::vector<const ExpertRule*> fired_rules(const MetaFeatures& meta, const std::vector<ExpertRule>& rules) {
  std::vector<const ExpertRule*> out;
  for (const auto& r : rules)
    if (r.fires(meta)) out.push_back(&r);
  std::stable_sort(out.begin(), out.end(), [](const ExpertRule* a, const ExpertRule* b) { return a->weight > b->weight; });
  return out;
}

/// Applies rules in order; returns false when the candidate is excluded.
bool apply_rules(Candidate& c, const std::vector<const ExpertRule*>& fired) {
  for (const ExpertRule* r : fired) {
    if (!r->target.matches(c.config)) continue;
    switch (r->action) {
      case RuleAction::Exclude: return false;
      case RuleAction::Boost: c.score *= 1.0 + r->weight; break;
      case RuleAction::Penalize: c.score *= std::max(0.0, 1.0 - r->weight); break;
    }
    c.fired.push_back(r->rule_id + " (" + std::string(action_text(r->action)) + ")");
  }
  return true;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ", ") + s;
  return out;
}

std::vector<Recommendation> finish(std::vector<Candidate>& cands, std::size_t n, const std::string& basis) {
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.order < b.order;
  });
  std::vector<Recommendation> out;
  for (auto& c : cands) {
    if (out.size() >= n) break;
    Recommendation r;
    r.config = c.config;
    r.expected_score = c.expected;
    r.score = c.score;
    r.rationale = basis;
    if (!c.fired.empty()) r.rationale += "; rules: " + join(c.fired);
    r.rank = out.size() + 1;
    out.push_back(std::move(r));
  }
  return out;
}

std::string fmt3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace

std::vector<Recommendation> rank_by_rules(const MetaFeatures& meta, const std::vector<ExpertRule>& rules,
                                          const std::vector<ml::ParamConfig>& candidates,
                                          const std::set<std::string>& history, std::size_t n) {
  const auto fired = fired_rules(meta, rules);
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    Candidate c{candidates[i], candidates[i].key(), std::nullopt, 1.0, i, {}};
    if (history.count(c.key)) continue;
    if (apply_rules(c, fired)) cands.push_back(std::move(c));
  }
  return finish(cands, n, "no knowledge-base evidence for this task; ranked by expert rules and menu order");
}

std::vector<Recommendation> recommend(const MetaFeatures& meta, const KnowledgeBase& kb,
                                      const std::vector<ExpertRule>& rules, const std::set<std::string>& history,
                                      std::size_t n, const RecommendOptions& options) {
  if (n < 1) throw Error(ErrorKind::Validation, "n must be at least 1");
  const std::string metric = options.metric.empty() ? std::string(ml::primary_metric(options.task)) : options.metric;
  ml::require_metric_name(metric);
  if (!ml::higher_is_better(metric))
    throw Error(ErrorKind::Validation, "recommendations rank by a higher-is-better metric, not " + metric);

  // Usable rows: the metric asked for, on a configuration valid for the task.
  struct Row {
    const KBEntry* entry;
    ml::ParamConfig config;
    std::string key;
  };
  std::vector<Row> rows;
  for (const auto& e : kb.entries()) {
    if (e.metric_name != metric || !ml::has_algorithm(options.task, e.algorithm)) continue;
    try {
      auto cfg = ml::validate_config(options.task, e.config());
      auto key = cfg.key();
      rows.push_back({&e, std::move(cfg), std::move(key)});
    } catch (const Error&) {
      // Off-menu parameters cannot be launched; skip the row.
    }
  }
  if (rows.empty()) return rank_by_rules(meta, rules, ml::full_grid(options.task), history, n);

  // (1) z-normalize, (2) nearest datasets by mean meta of their rows.
  const auto& stats = kb.feature_stats();
  auto z = [&](const std::array<double, MetaFeatures::kSize>& a) {
    std::array<double, MetaFeatures::kSize> out{};
    for (std::size_t k = 0; k < a.size(); ++k) out[k] = (a[k] - stats.mean[k]) / stats.stddev[k];
    return out;
  };
  const auto zq = z(meta.to_array());
  std::map<std::string, std::pair<std::array<double, MetaFeatures::kSize>, std::size_t>> sums;
  for (const auto& r : rows) {
    auto& [sum, count] = sums[r.entry->dataset_name];
    const auto a = r.entry->meta_features.to_array();
    for (std::size_t k = 0; k < a.size(); ++k) sum[k] += a[k];
    ++count;
  }
  std::vector<std::pair<double, std::string>> dists;
  for (const auto& [name, sc] : sums) {
    std::array<double, MetaFeatures::kSize> mean{};
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] = sc.first[k] / static_cast<double>(sc.second);
    const auto zd = z(mean);
    double d2 = 0;
    for (std::size_t k = 0; k < zd.size(); ++k) d2 += (zd[k] - zq[k]) * (zd[k] - zq[k]);
    dists.emplace_back(std::sqrt(d2), name);
  }
  std::sort(dists.begin(), dists.end());
  dists.resize(std::min(dists.size(), std::max<std::size_t>(options.neighbors, 1)));
  std::map<std::string, double> weight;
  for (const auto& [d, name] : dists) weight[name] = 1.0 / (1.0 + d);

  // (3) per config: weighted mean over neighbors of that neighbor's mean metric.
  struct Acc {
    ml::ParamConfig config;
    std::map<std::string, std::pair<double, std::size_t>> per_dataset;
  };
  std::map<std::string, Acc> acc;
  std::map<std::string, int> feedback;
  for (const auto& r : rows) {
    feedback[r.key] += r.entry->feedback_delta;
    auto w = weight.find(r.entry->dataset_name);
    if (w == weight.end()) continue;
    auto& a = acc[r.key];
    a.config = r.config;
    auto& [sum, count] = a.per_dataset[r.entry->dataset_name];
    sum += r.entry->metric_value;
    ++count;
  }

  std::string neighbors;
  for (const auto& [d, name] : dists) neighbors += (neighbors.empty() ? "" : ", ") + name + " (d=" + fmt3(d) + ")";

  // (4) feedback multiplier and rules, (5) history.
  const auto fired = fired_rules(meta, rules);
  std::vector<Candidate> cands;
  for (const auto& [key, a] : acc) {
    if (history.count(key)) continue;
    double num = 0, den = 0;
    for (const auto& [name, sc] : a.per_dataset) {
      const double w = weight.at(name);
      num += w * (sc.first / static_cast<double>(sc.second));
      den += w;
    }
    Candidate c;
    c.config = a.config;
    c.key = key;
    c.expected = num / den;
    const double mult = std::clamp(1.0 + options.feedback_step * feedback[key], options.feedback_min,
                                   options.feedback_max);
    c.score = *c.expected * mult;
    c.order = ml::algorithm_order(options.task, a.config.algorithm);
    if (mult != 1.0) c.fired.push_back("user feedback x" + fmt3(mult));
    if (apply_rules(c, fired)) cands.push_back(std::move(c));
  }
  // Ties: menu order of the algorithm, then the canonical key.
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(a.order, a.key) < std::tie(b.order, b.key);
  });
  for (std::size_t i = 0; i < cands.size(); ++i) cands[i].order = i;
  // (6) top n.
  return finish(cands, n, "similar datasets: " + neighbors);
}

// ---------------------------------------------------------------------------
// compare_algorithms

void to_json(json& j, const RankingReport& r) {
  json best = json::array();
  for (const auto& row : r.best) {
    json cells = json::array();
    for (const auto& v : row) cells.push_back(v ? json(*v) : json(nullptr));
    best.push_back(cells);
  }
  j = json{{"metric", r.metric},           {"algorithms", r.algorithms}, {"datasets", r.datasets},
           {"mean_metric", r.mean_metric}, {"average_rank", r.average_rank}, {"wins", r.wins},
           {"best", best}};
}

RankingReport compare_algorithms(const std::vector<ExperimentRecord>& records, const std::string& metric) {
  ml::require_metric_name(metric);
  const bool higher = ml::higher_is_better(metric);
  std::map<std::string, std::map<std::string, double>> best;  // algorithm -> dataset -> best
  std::set<std::string> datasets;
  for (const auto& r : records) {
    if (r.status != ExperimentStatus::Completed || !r.result) continue;
    auto v = r.result->metrics.get(metric);
    if (!v) continue;
    auto [it, inserted] = best[r.algorithm].emplace(r.dataset_id, *v);
    if (!inserted) it->second = higher ? std::max(it->second, *v) : std::min(it->second, *v);
    datasets.insert(r.dataset_id);
  }
  if (best.empty()) throw Error(ErrorKind::EmptyInput, "no completed experiments report " + metric);

  RankingReport rep;
  rep.metric = metric;
  for (const auto& [a, _] : best) rep.algorithms.push_back(a);
  rep.datasets.assign(datasets.begin(), datasets.end());
  const std::size_t A = rep.algorithms.size(), D = rep.datasets.size();
  rep.best.assign(A, std::vector<std::optional<double>>(D));
  for (std::size_t a = 0; a < A; ++a)
    for (std::size_t d = 0; d < D; ++d) {
      auto& m = best[rep.algorithms[a]];
      auto it = m.find(rep.datasets[d]);
      if (it != m.end()) rep.best[a][d] = it->second;
    }

  std::vector<double> rank_sum(A, 0), metric_sum(A, 0);
  std::vector<std::size_t> count(A, 0);
  rep.wins.assign(A, std::vector<std::size_t>(A, 0));
  for (std::size_t d = 0; d < D; ++d) {
    std::vector<std::size_t> present;
    for (std::size_t a = 0; a < A; ++a)
      if (rep.best[a][d]) present.push_back(a);
    auto better = [&](std::size_t x, std::size_t y) {
      return higher ? *rep.best[x][d] > *rep.best[y][d] : *rep.best[x][d] < *rep.best[y][d];
    };
    for (std::size_t a : present) {
      // Rank = 1 + strictly better + half the ties, i.e. the mean tied rank.
      double strictly = 0, ties = 0;
      for (std::size_t b : present) {
        if (b == a) continue;
        if (better(b, a)) ++strictly;
        else if (!better(a, b)) ++ties;
        if (better(a, b)) ++rep.wins[a][b];
      }
      rank_sum[a] += 1 + strictly + ties / 2;
      metric_sum[a] += *rep.best[a][d];
      ++count[a];
    }
  }
  for (std::size_t a = 0; a < A; ++a) {
    rep.mean_metric.push_back(metric_sum[a] / static_cast<double>(count[a]));
    rep.average_rank.push_back(rank_sum[a] / static_cast<double>(count[a]));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Results table

std::string format_results_table(const std::vector<ExperimentRecord>& records,
                                 const std::map<std::string, std::string>& dataset_names) {
  std::vector<const ExperimentRecord*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const ExperimentRecord* a, const ExperimentRecord* b) {
    return std::tie(a->created_at, a->id) < std::tie(b->created_at, b->id);
  });
  std::ostringstream os;
  os << "experiment_id\tdataset\talgorithm\tparameters";
  for (const auto& m : ml::metric_names()) os << "\t" << m;
  os << "\n";
  for (const auto* r : sorted) {
    auto name = dataset_names.find(r->dataset_id);
    os << r->id << "\t" << (name == dataset_names.end() ? r->dataset_id : name->second) << "\t" << r->algorithm << "\t"
       << r->config().canonical_params();
    for (const auto& m : ml::metric_names()) {
      os << "\t";
      if (r->result)
        if (auto v = r->result->metrics.get(m)) os << fmt_number(*v);
    }
    os << "\n";
  }
  return os.str();
}

void export_results_table(const std::vector<ExperimentRecord>& records,
                          const std::map<std::string, std::string>& dataset_names,
                          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << format_results_table(records, dataset_names);
  if (!out) throw Error(ErrorKind::IoError, "write to " + path.string() + " failed");
}

// ---------------------------------------------------------------------------
// Recommender

void Recommender::set_rules(std::vector<ExpertRule> rules) {
  std::unique_lock lock(mutex_);
  rules_ = std::move(rules);
}

std::vector<ExpertRule> Recommender::rules() const {
  std::shared_lock lock(mutex_);
  return rules_;
}

std::vector<KbRowError> Recommender::load_bootstrap(std::string_view tsv) {
  auto parsed = parse_knowledge_base(tsv);
  add_entries(parsed.kb.entries());
  return parsed.errors;
}

void Recommender::add_entries(const std::vector<KBEntry>& entries) {
  std::unique_lock lock(mutex_);
  kb_.add_all(entries);
}

void Recommender::fold_in(const ExperimentRecord& record, const DatasetRecord& dataset) {
  auto rows = live_entries(record, dataset);
  if (rows.empty()) return;
  std::unique_lock lock(mutex_);
  if (kb_.has_experiment(record.id)) return;
  kb_.add_all(rows);
}

void Recommender::rebuild_live(const ExperimentStore& store) {
  std::vector<KBEntry> rows;
  std::map<std::string, int> deltas;
  for (const auto& ev : store.feedback_events()) deltas[ev.experiment_id] += ev.vote == Vote::Up ? 1 : -1;
  std::map<std::string, DatasetRecord> datasets;
  for (const auto& d : store.list_datasets()) datasets[d.id] = d;
  for (const auto& rec : store.query_experiments({{"status", "completed"}})) {
    auto d = datasets.find(rec.dataset_id);
    if (d == datasets.end()) continue;
    for (auto& e : live_entries(rec, d->second)) {
      e.feedback_delta = deltas[rec.id];
      rows.push_back(std::move(e));
    }
  }
  std::unique_lock lock(mutex_);
  kb_.remove_if([](const KBEntry& e) { return e.source == KbSource::Live; });
  kb_.add_all(rows);
}

KnowledgeBase Recommender::snapshot() const {
  std::shared_lock lock(mutex_);
  return kb_;
}

std::vector<Recommendation> Recommender::recommend_for(const DatasetRecord& dataset,
                                                       const std::set<std::string>& history, std::size_t n) const {
  std::shared_lock lock(mutex_);
  RecommendOptions opts;
  opts.task = dataset.task_type;
  return recommend(dataset.meta_features, kb_, rules_, history, n, opts);
}

KBEntry Recommender::apply_feedback(ExperimentStore& store, const std::string& experiment_id, Vote vote,
                                   TimestampMs now) {
  auto rec = store.record_feedback(experiment_id, vote, now);
  auto dataset = store.require_dataset(rec.dataset_id);
  std::unique_lock lock(mutex_);
  if (!kb_.has_experiment(rec.id)) kb_.add_all(live_entries(rec, dataset));
  kb_.adjust_feedback(rec.id, vote == Vote::Up ? 1 : -1);
  const std::string primary(ml::primary_metric(rec.task));
  for (const auto& e : kb_.entries())
    if (e.experiment_id == rec.id && e.metric_name == primary) return e;
  throw Error(ErrorKind::NotCompleted, "experiment '" + experiment_id + "' has no " + primary + " result");
}

std::set<std::string> history_for(const ExperimentStore& store, const std::string& dataset_id) {
  std::set<std::string> out;
  for (const auto& r : store.query_experiments({{"dataset_id", dataset_id}})) out.insert(r.config().key());
  return out;
}

}  // namespace autolab
