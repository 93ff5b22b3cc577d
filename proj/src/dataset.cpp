#include "autolab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <unordered_set>

namespace autolab {

std::string_view to_string(TaskType task) {
  return task == TaskType::Classification ? "classification" : "regression";
}

std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::Numeric ? "numeric" : "categorical";
}

TaskType parse_task_type(std::string_view text) {
  if (text == "classification") return TaskType::Classification;
  if (text == "regression") return TaskType::Regression;
  throw Error(ErrorKind::Validation, "unknown task type '" + std::string(text) + "'");
}

std::array<double, MetaFeatures::kSize> MetaFeatures::to_array() const {
  return {n_instances,   n_features,  n_classes,     imbalance_ratio, frac_categorical,
          mean_abs_corr, mean_skew,   mean_kurtosis, log_instances,   log_features};
}

MetaFeatures MetaFeatures::from_array(const std::array<double, kSize>& v) {
  return MetaFeatures{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9]};
}

const std::array<std::string_view, MetaFeatures::kSize>& MetaFeatures::field_names() {
  static const std::array<std::string_view, kSize> names = {
      "n_instances",   "n_features", "n_classes",     "imbalance_ratio", "frac_categorical",
      "mean_abs_corr", "mean_skew",  "mean_kurtosis", "log_instances",   "log_features"};
  return names;
}

std::optional<std::size_t> MetaFeatures::field_index(std::string_view name) {
  const auto& names = field_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  return std::nullopt;
}

std::size_t Table::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i].name == name) return i;
  throw Error(ErrorKind::UnknownField, "no column named '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// CSV

namespace {

char detect_delimiter(std::string_view raw) {
  std::string_view first = raw.substr(0, raw.find('\n'));
  auto commas = std::count(first.begin(), first.end(), ',');
  auto tabs = std::count(first.begin(), first.end(), '\t');
  return tabs > commas ? '\t' : ',';
}

// Splits one logical record starting at `pos`; handles double-quoted fields.
std::vector<std::string> read_record(std::string_view raw, std::size_t& pos, char delim,
                                     std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  bool cell_was_quoted = false;
  while (pos < raw.size()) {
    char c = raw[pos];
    if (quoted) {
      if (c == '"') {
        if (pos + 1 < raw.size() && raw[pos + 1] == '"') {
          cell.push_back('"');
          pos += 2;
          continue;
        }
        quoted = false;
        ++pos;
        continue;
      }
      cell.push_back(c);
      ++pos;
      continue;
    }
    if (c == '"' && trim(cell).empty()) {
      quoted = true;
      cell_was_quoted = true;
      cell.clear();
      ++pos;
      continue;
    }
    if (c == delim) {
      cells.push_back(cell_was_quoted ? cell : trim(cell));
      cell.clear();
      cell_was_quoted = false;
      ++pos;
      continue;
    }
    if (c == '\r' || c == '\n') {
      if (c == '\r' && pos + 1 < raw.size() && raw[pos + 1] == '\n') ++pos;
      ++pos;
      break;
    }
    cell.push_back(c);
    ++pos;
  }
  if (quoted)
    throw Error(ErrorKind::ParseError, "unterminated quote on line " + std::to_string(line_no));
  cells.push_back(cell_was_quoted ? cell : trim(cell));
  return cells;
}

bool blank_record(const std::vector<std::string>& cells) {
  return std::all_of(cells.begin(), cells.end(), [](const std::string& c) { return c.empty(); });
}

}  // namespace

RawTable parse_csv(std::string_view raw, std::size_t row_limit) {
  // Skip a UTF-8 byte-order mark.
  if (raw.size() >= 3 && raw.substr(0, 3) == "\xEF\xBB\xBF") raw.remove_prefix(3);
  RawTable table;
  table.delimiter = detect_delimiter(raw);
  std::size_t pos = 0;
  std::size_t line = 0;
  while (pos < raw.size()) {
    ++line;
    auto cells = read_record(raw, pos, table.delimiter, line);
    if (blank_record(cells)) continue;
    if (table.header.empty()) {
      table.header = std::move(cells);
      std::unordered_set<std::string> seen;
      for (const auto& h : table.header) {
        if (h.empty()) throw Error(ErrorKind::ParseError, "empty column name in header");
        if (!seen.insert(h).second)
          throw Error(ErrorKind::ParseError, "duplicate column name '" + h + "'");
      }
      continue;
    }
    if (cells.size() != table.header.size())
      throw Error(ErrorKind::ParseError, "ragged row on line " + std::to_string(line) +
                                             ": expected " + std::to_string(table.header.size()) +
                                             " cells, got " + std::to_string(cells.size()));
    if (table.rows.size() >= row_limit)
      throw Error(ErrorKind::ParseError,
                  "row limit of " + std::to_string(row_limit) + " exceeded");
    table.rows.push_back(std::move(cells));
  }
  if (table.header.empty()) throw Error(ErrorKind::ParseError, "missing header row");
  return table;
}

std::string canonical_csv(const RawTable& table) {
  auto emit = [&](std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out.push_back(table.delimiter);
      const std::string& c = cells[i];
      bool needs_quotes = c.find_first_of(std::string{table.delimiter, '"', '\n', '\r'}) !=
                              std::string::npos ||
                          (!c.empty() && (std::isspace(static_cast<unsigned char>(c.front())) ||
                                          std::isspace(static_cast<unsigned char>(c.back()))));
      if (!needs_quotes) {
        out += c;
        continue;
      }
      out.push_back('"');
      for (char ch : c) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
      }
      out.push_back('"');
    }
    out.push_back('\n');
  };
  std::string out;
  emit(out, table.header);
  for (const auto& row : table.rows) emit(out, row);
  return out;
}

bool is_missing_cell(std::string_view cell) {
  if (cell.empty()) return true;
  std::string lower = to_lower(cell);
  return lower == "na" || lower == "n/a" || lower == "nan" || lower == "?" || lower == "null" ||
         lower == "none";
}

std::optional<double> parse_number(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value))
    return std::nullopt;
  return value;
}

std::set<std::string> normalize_tags(const std::vector<std::string>& tags) {
  std::set<std::string> out;
  for (const auto& t : tags) {
    std::string norm = to_lower(trim(t));
    if (!norm.empty()) out.insert(std::move(norm));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Typing and imputation

namespace {

constexpr std::size_t kMaxIntegerCategories = 10;

ColumnKind detect_kind(const RawTable& raw, std::size_t col, const std::vector<std::size_t>& rows,
                       bool is_regression_target) {
  std::set<double> distinct;
  bool all_integer = true;
  for (std::size_t r : rows) {
    const std::string& cell = raw.rows[r][col];
    if (is_missing_cell(cell)) continue;
    auto v = parse_number(cell);
    if (!v) return ColumnKind::Categorical;
    if (all_integer) {
      if (*v != std::floor(*v)) {
        all_integer = false;
      } else if (distinct.size() <= kMaxIntegerCategories) {
        distinct.insert(*v);
      }
    }
  }
  if (all_integer && !distinct.empty() && distinct.size() <= kMaxIntegerCategories &&
      !is_regression_target)
    return ColumnKind::Categorical;
  return ColumnKind::Numeric;
}

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string mode_of(const std::vector<std::string>& values) {
  std::map<std::string, std::size_t> counts;
  for (const auto& v : values) ++counts[v];
  std::string best;
  std::size_t best_count = 0;
  for (const auto& [value, count] : counts) {  // ordered: ties go to the smallest value
    if (count > best_count) {
      best = value;
      best_count = count;
    }
  }
  return best;
}

using KindResolver = std::function<ColumnKind(std::size_t col, ColumnKind detected)>;

Table build_table(const RawTable& raw, const std::string& target_column, TaskType task,
                  const KindResolver& resolve_kind) {
  auto target_it = std::find(raw.header.begin(), raw.header.end(), target_column);
  if (target_it == raw.header.end())
    throw Error(ErrorKind::TargetError, "target column '" + target_column + "' not in header");
  const std::size_t target = static_cast<std::size_t>(target_it - raw.header.begin());

  std::vector<std::size_t> kept;
  kept.reserve(raw.rows.size());
  for (std::size_t r = 0; r < raw.rows.size(); ++r)
    if (!is_missing_cell(raw.rows[r][target])) kept.push_back(r);
  if (kept.empty()) throw Error(ErrorKind::EmptyDataset, "dataset has no rows with a target value");

  Table table;
  table.n_rows = kept.size();
  for (std::size_t c = 0; c < raw.header.size(); ++c) {
    Column column;
    column.name = raw.header[c];
    const bool is_target = c == target;
    ColumnKind kind;
    if (is_target) {
      kind = task == TaskType::Classification ? ColumnKind::Categorical : ColumnKind::Numeric;
    } else {
      kind = resolve_kind(c, detect_kind(raw, c, kept, false));
    }
    column.kind = kind;

    if (kind == ColumnKind::Numeric) {
      std::vector<std::optional<double>> parsed;
      parsed.reserve(kept.size());
      std::vector<double> present;
      for (std::size_t r : kept) {
        const std::string& cell = raw.rows[r][c];
        if (is_missing_cell(cell)) {
          parsed.emplace_back();
          continue;
        }
        auto v = parse_number(cell);
        if (!v) {
          if (is_target)
            throw Error(ErrorKind::TargetError,
                        "regression target '" + column.name + "' has non-numeric value '" + cell + "'");
          throw Error(ErrorKind::ParseError,
                      "column '" + column.name + "' has non-numeric value '" + cell + "'");
        }
        parsed.push_back(v);
        present.push_back(*v);
      }
      const double fill = median_of(present);
      column.numeric.reserve(parsed.size());
      for (const auto& v : parsed) column.numeric.push_back(v.value_or(fill));
    } else {
      std::vector<std::string> present;
      for (std::size_t r : kept)
        if (!is_missing_cell(raw.rows[r][c])) present.push_back(raw.rows[r][c]);
      const std::string fill = mode_of(present);
      column.categorical.reserve(kept.size());
      for (std::size_t r : kept) {
        const std::string& cell = raw.rows[r][c];
        column.categorical.push_back(is_missing_cell(cell) ? fill : cell);
      }
    }
    table.columns.push_back(std::move(column));
  }

  const Column& tcol = table.columns[target];
  if (task == TaskType::Classification) {
    if (class_labels(tcol).size() < 2)
      throw Error(ErrorKind::TargetError,
                  "classification target '" + target_column + "' has fewer than 2 distinct values");
  }
  return table;
}

}  // namespace

std::vector<std::string> class_labels(const Column& target) {
  std::set<std::string> distinct(target.categorical.begin(), target.categorical.end());
  if (target.kind == ColumnKind::Numeric) {
    std::set<double> nums(target.numeric.begin(), target.numeric.end());
    std::vector<std::string> out;
    for (double v : nums) {
      char buf[64];
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.emplace_back(buf, p);
    }
    return out;
  }
  std::vector<std::string> labels(distinct.begin(), distinct.end());
  const bool all_numeric = std::all_of(labels.begin(), labels.end(),
                                       [](const std::string& l) { return parse_number(l).has_value(); });
  if (all_numeric) {
    std::stable_sort(labels.begin(), labels.end(), [](const std::string& a, const std::string& b) {
      return *parse_number(a) < *parse_number(b);
    });
  }
  return labels;
}

PreparedDataset prepare_dataset(std::string_view raw_bytes, const std::string& name,
                                const std::string& target_column, TaskType task,
                                const std::set<std::string>& tags, TimestampMs created_at,
                                const IngestOptions& options) {
  RawTable raw = parse_csv(raw_bytes, options.row_limit);
  for (const auto& col : options.force_categorical)
    if (std::find(raw.header.begin(), raw.header.end(), col) == raw.header.end())
      throw Error(ErrorKind::Validation, "override names unknown column '" + col + "'");
  for (const auto& col : options.force_numeric)
    if (std::find(raw.header.begin(), raw.header.end(), col) == raw.header.end())
      throw Error(ErrorKind::Validation, "override names unknown column '" + col + "'");

  Table table = build_table(raw, target_column, task, [&](std::size_t c, ColumnKind detected) {
    if (options.force_categorical.count(raw.header[c])) return ColumnKind::Categorical;
    if (options.force_numeric.count(raw.header[c])) return ColumnKind::Numeric;
    return detected;
  });

  PreparedDataset out;
  out.canonical_csv = canonical_csv(raw);
  DatasetRecord& rec = out.record;
  rec.id = sha256_hex(out.canonical_csv);
  rec.name = name;
  for (const auto& col : table.columns) rec.columns.push_back({col.name, col.kind});
  rec.target_column = target_column;
  rec.task_type = task;
  rec.tags = normalize_tags(std::vector<std::string>(tags.begin(), tags.end()));
  rec.n_rows = table.n_rows;
  rec.meta_features = compute_meta_features(table, target_column, task);
  rec.created_at = created_at;
  out.table = std::move(table);
  return out;
}

Table load_table(std::string_view canonical_bytes, const DatasetRecord& record) {
  RawTable raw = parse_csv(canonical_bytes, SIZE_MAX);
  if (raw.header.size() != record.columns.size())
    throw Error(ErrorKind::ParseError, "stored dataset does not match its record");
  return build_table(raw, record.target_column, record.task_type,
                     [&](std::size_t c, ColumnKind) { return record.columns[c].kind; });
}

// ---------------------------------------------------------------------------
// Meta-features

namespace {

struct Moments {
  double skew = 0;
  double kurtosis = 0;
};

Moments moments(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    const double d = v - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  // Constant (or numerically constant) columns carry no shape information.
  if (!(m2 > 1e-12 * (mean * mean + 1.0))) return {};
  return {m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0};
}

double abs_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0) || !(syy > 0)) return 0.0;
  const double r = std::fabs(sxy / std::sqrt(sxx * syy));
  return std::isfinite(r) ? std::min(r, 1.0) : 0.0;
}

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

}  // namespace

MetaFeatures compute_meta_features(const Table& table, std::string_view target_column,
                                   TaskType task) {
  MetaFeatures m;
  const std::size_t target = table.index_of(target_column);
  const std::size_t n_features = table.columns.size() - 1;
  m.n_instances = static_cast<double>(table.n_rows);
  m.n_features = static_cast<double>(n_features);

  if (task == TaskType::Classification) {
    const Column& t = table.columns[target];
    std::map<std::string, std::size_t> counts;
    if (t.kind == ColumnKind::Categorical) {
      for (const auto& v : t.categorical) ++counts[v];
    } else {
      for (double v : t.numeric) ++counts[std::to_string(v)];
    }
    m.n_classes = static_cast<double>(counts.size());
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& [_, c] : counts) {
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    m.imbalance_ratio = hi > 0 ? static_cast<double>(lo) / static_cast<double>(hi) : 1.0;
  } else {
    m.n_classes = 0;
    m.imbalance_ratio = 1.0;
  }

  std::vector<const std::vector<double>*> numeric;
  std::size_t categorical = 0;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c == target) continue;
    if (table.columns[c].kind == ColumnKind::Categorical)
      ++categorical;
    else
      numeric.push_back(&table.columns[c].numeric);
  }
  m.frac_categorical =
      n_features > 0 ? static_cast<double>(categorical) / static_cast<double>(n_features) : 0.0;

  if (numeric.size() >= 2) {
    double sum = 0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < numeric.size(); ++i)
      for (std::size_t j = i + 1; j < numeric.size(); ++j) {
        sum += abs_pearson(*numeric[i], *numeric[j]);
        ++pairs;
      }
    m.mean_abs_corr = sum / static_cast<double>(pairs);
  }
  if (!numeric.empty() && table.n_rows > 0) {
    double skew = 0, kurt = 0;
    for (const auto* col : numeric) {
      Moments mo = moments(*col);
      skew += mo.skew;
      kurt += mo.kurtosis;
    }
    m.mean_skew = finite_or_zero(skew / static_cast<double>(numeric.size()));
    m.mean_kurtosis = finite_or_zero(kurt / static_cast<double>(numeric.size()));
  }
  m.log_instances = table.n_rows > 0 ? std::log10(m.n_instances) : 0.0;
  m.log_features = n_features > 0 ? std::log10(m.n_features) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const MetaFeatures& m) {
  j = nlohmann::json::object();
  const auto values = m.to_array();
  const auto& names = MetaFeatures::field_names();
  for (std::size_t i = 0; i < values.size(); ++i) j[std::string(names[i])] = values[i];
}

void from_json(const nlohmann::json& j, MetaFeatures& m) {
  std::array<double, MetaFeatures::kSize> values{};
  const auto& names = MetaFeatures::field_names();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = j.at(std::string(names[i])).get<double>();
  m = MetaFeatures::from_array(values);
}

void to_json(nlohmann::json& j, const DatasetRecord& r) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : r.columns) cols.push_back({{"name", c.name}, {"kind", to_string(c.kind)}});
  j = {{"id", r.id},
       {"name", r.name},
       {"columns", cols},
       {"target_column", r.target_column},
       {"task_type", to_string(r.task_type)},
       {"tags", r.tags},
       {"n_rows", r.n_rows},
       {"meta_features", r.meta_features},
       {"created_at", r.created_at}};
}

void from_json(const nlohmann::json& j, DatasetRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.name = j.at("name").get<std::string>();
  r.columns.clear();
  for (const auto& c : j.at("columns")) {
    const auto kind = c.at("kind").get<std::string>();
    if (kind != "numeric" && kind != "categorical")
      throw Error(ErrorKind::ParseError, "unknown column kind '" + kind + "'");
    r.columns.push_back({c.at("name").get<std::string>(),
                         kind == "numeric" ? ColumnKind::Numeric : ColumnKind::Categorical});
  }
  r.target_column = j.at("target_column").get<std::string>();
  r.task_type = parse_task_type(j.at("task_type").get<std::string>());
  r.tags = j.at("tags").get<std::set<std::string>>();
  r.n_rows = j.at("n_rows").get<std::size_t>();
  r.meta_features = j.at("meta_features").get<MetaFeatures>();
  r.created_at = j.at("created_at").get<TimestampMs>();
}

}  // namespace autolab
