#include "autolab/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "autolab/recommender.hpp"

namespace autolab {

using nlohmann::json;

void to_json(json& j, const HeatmapMatrix& m) {
  json cells = json::array();
  for (const auto& row : m.cells) {
    json r = json::array();
    for (const auto& v : row) r.push_back(v ? json(*v) : json(nullptr));
    cells.push_back(r);
  }
  j = json{{"metric", m.metric}, {"row_labels", m.row_labels}, {"col_labels", m.col_labels},
           {"col_ids", m.col_ids}, {"cells", cells}};
}

HeatmapMatrix build_heatmap(const std::vector<ExperimentRecord>& records, const std::string& metric,
                            const std::map<std::string, std::string>& dataset_names) {
  ml::require_metric_name(metric);
  HeatmapMatrix m;
  m.metric = metric;
  RankingReport rep;
  try {
    rep = compare_algorithms(records, metric);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EmptyInput) return m;
    throw;
  }

  std::vector<std::size_t> rows(rep.algorithms.size());
  std::iota(rows.begin(), rows.end(), 0);
  std::sort(rows.begin(), rows.end(), [&](auto a, auto b) {
    if (rep.average_rank[a] != rep.average_rank[b]) return rep.average_rank[a] < rep.average_rank[b];
    return rep.algorithms[a] < rep.algorithms[b];
  });
  auto label_of = [&](const std::string& id) {
    auto it = dataset_names.find(id);
    return it == dataset_names.end() ? id : it->second;
  };
  std::vector<std::size_t> cols(rep.datasets.size());
  std::iota(cols.begin(), cols.end(), 0);
  std::sort(cols.begin(), cols.end(), [&](auto a, auto b) {
    return std::make_pair(label_of(rep.datasets[a]), rep.datasets[a]) <
           std::make_pair(label_of(rep.datasets[b]), rep.datasets[b]);
  });
  for (auto c : cols) {
    m.col_labels.push_back(label_of(rep.datasets[c]));
    m.col_ids.push_back(rep.datasets[c]);
  }
  for (auto r : rows) {
    m.row_labels.push_back(rep.algorithms[r]);
    std::vector<std::optional<double>> cells;
    for (auto c : cols) cells.push_back(rep.best[r][c]);
    m.cells.push_back(std::move(cells));
  }
  return m;
}

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "write to " + path.string() + " failed");
}

}  // namespace

std::string heatmap_svg(const HeatmapMatrix& m) {
  const int cell = 60, left = 160, top = 120;
  const int w = left + cell * static_cast<int>(m.col_labels.size()) + 20;
  const int h = top + cell * static_cast<int>(m.row_labels.size()) + 20;
  double lo = 0, hi = 0;
  bool any = false;
  for (const auto& row : m.cells)
    for (const auto& v : row)
      if (v) {
        lo = any ? std::min(lo, *v) : *v;
        hi = any ? std::max(hi, *v) : *v;
        any = true;
      }
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"8\" y=\"16\" font-size=\"14\">" << xml_escape(m.metric) << "</text>\n";
  for (std::size_t j = 0; j < m.col_labels.size(); ++j) {
    const int x = left + cell * static_cast<int>(j) + cell / 2;
    os << "<text transform=\"translate(" << x << "," << top - 6 << ") rotate(-45)\">" << xml_escape(m.col_labels[j])
       << "</text>\n";
  }
  for (std::size_t i = 0; i < m.row_labels.size(); ++i) {
    const int y = top + cell * static_cast<int>(i);
    os << "<text x=\"8\" y=\"" << y + cell / 2 + 4 << "\">" << xml_escape(m.row_labels[i]) << "</text>\n";
    for (std::size_t j = 0; j < m.col_labels.size(); ++j) {
      const int x = left + cell * static_cast<int>(j);
      const auto& v = m.cells[i][j];
      std::string fill = "#eeeeee";
      if (v) {
        const double t = hi > lo ? (*v - lo) / (hi - lo) : 1.0;
        const int r = static_cast<int>(255 * (1 - t)), g = static_cast<int>(120 + 100 * t), b = static_cast<int>(255 * (1 - t) * 0.6 + 60);
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
        fill = buf;
      }
      os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"" << fill
         << "\" stroke=\"#ffffff\"/>\n";
      os << "<text x=\"" << x + cell / 2 << "\" y=\"" << y + cell / 2 + 4 << "\" text-anchor=\"middle\">"
         << (v ? fixed(*v, 3) : "-") << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

std::string roc_csv(const ml::RocCurve& curve) {
  std::string out = "fpr,tpr\n";
  for (const auto& [fpr, tpr] : curve.points) out += fixed(fpr, 6) + "," + fixed(tpr, 6) + "\n";
  return out;
}

std::vector<std::pair<double, double>> parse_roc_csv(std::string_view text) {
  std::vector<std::pair<double, double>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != "fpr,tpr") throw Error(ErrorKind::FormatError, "ROC CSV lacks the fpr,tpr header");
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto comma = line.find(',');
    auto a = comma == std::string::npos ? std::nullopt : parse_number(trim(std::string_view(line).substr(0, comma)));
    auto b = comma == std::string::npos ? std::nullopt : parse_number(trim(std::string_view(line).substr(comma + 1)));
    if (!a || !b) throw Error(ErrorKind::FormatError, "bad ROC row '" + line + "'");
    out.emplace_back(*a, *b);
  }
  return out;
}

std::string roc_svg(const ml::RocCurve& curve, const std::string& title) {
  const double size = 300, pad = 40;
  auto px = [&](double v) { return fixed(pad + v * size, 2); };
  auto py = [&](double v) { return fixed(pad + (1 - v) * size, 2); };
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * pad << "\" height=\"" << size + 2 * pad
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<text x=\"" << pad << "\" y=\"20\" font-size=\"13\">" << xml_escape(title) << " (AUC " << fixed(curve.auc, 3)
     << ")</text>\n";
  os << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size << "\" height=\"" << size
     << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  os << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
     << "\" stroke=\"#aaaaaa\" stroke-dasharray=\"4 4\"/>\n";
  os << "<polyline fill=\"none\" stroke=\"#1f6fb4\" stroke-width=\"2\" points=\"";
  for (std::size_t i = 0; i < curve.points.size(); ++i)
    os << (i ? " " : "") << px(curve.points[i].first) << "," << py(curve.points[i].second);
  os << "\"/>\n";
  os << "<text x=\"" << pad + size / 2 << "\" y=\"" << size + pad + 28 << "\" text-anchor=\"middle\">false positive rate</text>\n";
  os << "<text transform=\"translate(14," << pad + size / 2 << ") rotate(-90)\" text-anchor=\"middle\">true positive rate</text>\n";
  os << "</svg>\n";
  return os.str();
}

ml::RocCurve experiment_roc(const ExperimentStore& store, const std::string& experiment_id) {
  const auto rec = store.require_experiment(experiment_id);
  if (rec.task != TaskType::Classification)
    throw Error(ErrorKind::NotClassification, "experiment '" + experiment_id + "' is a regression run");
  if (rec.status != ExperimentStatus::Completed || !rec.result)
    throw Error(ErrorKind::NotCompleted, "experiment '" + experiment_id + "' is " + std::string(to_string(rec.status)));
  if (!rec.result->roc) throw Error(ErrorKind::NotClassification, "experiment '" + experiment_id + "' has no ROC curve");
  return *rec.result->roc;
}

RocExport export_roc(ExperimentStore& store, const std::string& experiment_id, const std::filesystem::path& dir) {
  const auto curve = experiment_roc(store, experiment_id);
  const auto rec = store.require_experiment(experiment_id);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  RocExport out;
  const std::string csv = roc_csv(curve);
  const std::string svg = roc_svg(curve, rec.algorithm + " " + rec.config().canonical_params());
  out.csv_path = dir / (experiment_id + "-roc.csv");
  out.svg_path = dir / (experiment_id + "-roc.svg");
  write_text(out.csv_path, csv);
  write_text(out.svg_path, svg);
  out.csv_sha = store.put_artifact(csv);
  out.svg_sha = store.put_artifact(svg);
  store.link_artifact(experiment_id, "roc_csv", out.csv_sha);
  store.link_artifact(experiment_id, "roc_svg", out.svg_sha);
  return out;
}

}  // namespace autolab
