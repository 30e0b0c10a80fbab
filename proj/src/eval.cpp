#include "mmkd/eval.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "mmkd/errors.hpp"
#include "mmkd/losses.hpp"

namespace mmkd {

using nlohmann::json;

BinaryErrorBreakdown acer(const Eigen::VectorXi& predictions, const Eigen::VectorXi& labels) {
  if (predictions.size() != labels.size()) throw ContractError("acer: predictions/labels length mismatch");
  Eigen::Index attacks = 0, bona = 0, attack_errors = 0, bona_errors = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1) {
      ++attacks;
      attack_errors += predictions(i) != 1 ? 1 : 0;
    } else if (labels(i) == 0) {
      ++bona;
      bona_errors += predictions(i) != 0 ? 1 : 0;
    } else {
      throw ContractError("acer: labels must be binary");
    }
  }
  if (attacks == 0 || bona == 0) throw ContractError("acer: both classes must be present");
  BinaryErrorBreakdown out;
  out.apcer = static_cast<double>(attack_errors) / static_cast<double>(attacks);
  out.bpcer = static_cast<double>(bona_errors) / static_cast<double>(bona);
  out.acer = (out.apcer + out.bpcer) / 2.0;
  return out;
}

namespace {

bool row_equal(const ReportRow& a, const ReportRow& b) {
  return a.pattern == b.pattern && a.error_rate_pct == b.error_rate_pct && a.acer_pct == b.acer_pct && a.n == b.n;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("report: cannot parse number '" + s + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

DropoutPattern pattern_from_render(const std::string& rendered, const std::vector<std::string>& names) {
  DropoutPattern p;
  p.present.assign(names.size(), false);
  for (const std::string& part : split(rendered, '+')) {
    const auto it = std::find(names.begin(), names.end(), part);
    if (it == names.end()) throw ConfigError("report: unknown modality name '" + part + "'");
    p.present[static_cast<std::size_t>(it - names.begin())] = true;
  }
  return p;
}

}  // namespace

bool operator==(const CombinationReport& a, const CombinationReport& b) {
  if (a.modality_names != b.modality_names || a.num_classes != b.num_classes) return false;
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    if (!row_equal(a.rows[i], b.rows[i])) return false;
  }
  return row_equal(a.average, b.average);
}

CombinationReport evaluate_combinations(const DeploymentNet& net, const Dataset& data) {
  if (data.test_size() == 0) throw ContractError("evaluate_combinations: empty test set");
  CombinationReport report;
  report.modality_names = data.spec.names();
  report.num_classes = data.spec.num_classes;
  report.cached_labels = data.test_labels;

  ModalityBatch batch;
  batch.features = data.test_features;
  batch.labels = data.test_labels;

  const PatternFamilies families = enumerate_patterns(data.spec.num_modalities);
  double sum_err = 0.0, sum_acer = 0.0;
  for (const DropoutPattern& pattern : families.full) {
    batch.patterns.assign(static_cast<std::size_t>(batch.batch_size()), pattern);
    const DeploymentForward fwd = forward_deployment(net, batch);
    ReportRow row;
    row.pattern = pattern;
    row.n = data.test_size();
    row.error_rate_pct = 100.0 * error_rate(fwd.logits, data.test_labels);
    if (report.has_acer()) {
      const BinaryErrorBreakdown breakdown = acer(argmax_rows(fwd.logits), data.test_labels);
      row.acer_pct = 100.0 * breakdown.acer;
      report.cached_scores.push_back(softmax_rows(fwd.logits).col(1));
    }
    sum_err += row.error_rate_pct;
    sum_acer += row.acer_pct;
    report.rows.push_back(std::move(row));
  }

  const double count = static_cast<double>(report.rows.size());
  report.average.error_rate_pct = sum_err / count;
  report.average.acer_pct = sum_acer / count;
  report.average.n = data.test_size();
  return report;
}

std::string report_to_csv(const CombinationReport& report) {
  std::string out = report.has_acer() ? "pattern,error_rate,acer,n\n" : "pattern,error_rate,n\n";
  const auto emit = [&](const std::string& name, const ReportRow& row) {
    out += name;
    out += ',';
    out += format_double(row.error_rate_pct);
    out += ',';
    if (report.has_acer()) {
      out += format_double(row.acer_pct);
      out += ',';
    }
    out += std::to_string(row.n);
    out += '\n';
  };
  for (const ReportRow& row : report.rows) emit(row.pattern.render(report.modality_names), row);
  emit("average", report.average);
  return out;
}

CombinationReport parse_report_csv(const std::string& csv_text, const std::vector<std::string>& modality_names,
                                   int num_classes) {
  CombinationReport report;
  report.modality_names = modality_names;
  report.num_classes = num_classes;
  std::istringstream in(csv_text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("report csv: empty input");
  const std::string expected = report.has_acer() ? "pattern,error_rate,acer,n" : "pattern,error_rate,n";
  if (line != expected) throw ConfigError("report csv: unexpected header '" + line + "'");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split(line, ',');
    if (fields.size() != (report.has_acer() ? 4u : 3u)) throw ConfigError("report csv: malformed row '" + line + "'");
    ReportRow row;
    row.error_rate_pct = parse_double(fields[1]);
    if (report.has_acer()) row.acer_pct = parse_double(fields[2]);
    row.n = static_cast<Eigen::Index>(std::stoll(fields[report.has_acer() ? 3 : 2]));
    if (fields[0] == "average") {
      report.average = row;
    } else {
      row.pattern = pattern_from_render(fields[0], modality_names);
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

namespace {

json row_to_json(const CombinationReport& report, const ReportRow& row, bool footer) {
  json obj;
  if (!footer) {
    obj["pattern"] = row.pattern.render(report.modality_names);
    json bits = json::array();
    for (int j = 0; j < row.pattern.size(); ++j) {
      bits.push_back(static_cast<bool>(row.pattern.present[static_cast<std::size_t>(j)]));
    }
    obj["present"] = bits;
  }
  obj["error_rate"] = row.error_rate_pct;
  if (report.has_acer()) obj["acer"] = row.acer_pct;
  obj["n"] = row.n;
  return obj;
}

ReportRow row_from_json(const json& obj, const std::vector<std::string>& names, bool has_acer, bool footer) {
  ReportRow row;
  if (!footer) {
    row.pattern.present.clear();
    for (const auto& bit : obj.at("present")) row.pattern.present.push_back(bit.get<bool>());
    if (row.pattern.size() != static_cast<int>(names.size())) throw ConfigError("report json: pattern width mismatch");
  }
  row.error_rate_pct = obj.at("error_rate").get<double>();
  if (has_acer) row.acer_pct = obj.at("acer").get<double>();
  row.n = obj.at("n").get<Eigen::Index>();
  return row;
}

}  // namespace

std::string report_to_json(const CombinationReport& report) {
  json doc;
  doc["modality_names"] = report.modality_names;
  doc["num_classes"] = report.num_classes;
  json rows = json::array();
  for (const ReportRow& row : report.rows) rows.push_back(row_to_json(report, row, false));
  doc["rows"] = rows;
  doc["average"] = row_to_json(report, report.average, true);
  return doc.dump(2) + "\n";
}

CombinationReport parse_report_json(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("report is not valid JSON: ") + e.what());
  }
  CombinationReport report;
  report.modality_names = doc.at("modality_names").get<std::vector<std::string>>();
  report.num_classes = doc.at("num_classes").get<int>();
  for (const auto& obj : doc.at("rows")) {
    report.rows.push_back(row_from_json(obj, report.modality_names, report.has_acer(), false));
  }
  report.average = row_from_json(doc.at("average"), report.modality_names, report.has_acer(), true);
  return report;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << content;
  if (!out) throw ConfigError("write failed for " + path);
}

void write_report_svg(const CombinationReport& report, const std::string& path) {
  const int bar_area = 420, label_w = 150, row_h = 26, pad = 10;
  const int width = label_w + bar_area + 120;
  const int height = pad * 2 + row_h * static_cast<int>(report.rows.size() + 2);
  double max_err = 1e-9;
  for (const ReportRow& row : report.rows) max_err = std::max(max_err, row.error_rate_pct);

  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
  svg << "<text x='" << pad << "' y='" << pad + 12 << "' font-size='13' font-family='sans-serif'>"
      << "error rate (%) per modality combination</text>\n";
  int y = pad + row_h;
  const auto bar = [&](const std::string& name, double value, const char* color) {
    const int w = static_cast<int>(bar_area * value / max_err);
    svg << "<text x='" << pad << "' y='" << y + 15 << "' font-size='12' font-family='sans-serif'>" << name
        << "</text>\n";
    svg << "<rect x='" << label_w << "' y='" << y + 4 << "' width='" << std::max(w, 1) << "' height='" << row_h - 10
        << "' fill='" << color << "'/>\n";
    svg << "<text x='" << label_w + w + 6 << "' y='" << y + 15 << "' font-size='11' font-family='sans-serif'>"
        << format_double(value) << "</text>\n";
    y += row_h;
  };
  for (const ReportRow& row : report.rows) bar(row.pattern.render(report.modality_names), row.error_rate_pct, "#4878cf");
  bar("average", report.average.error_rate_pct, "#d65f5f");
  svg << "</svg>\n";
  write_text_file(path, svg.str());
}

bool write_score_scatter_svg(const CombinationReport& report, const std::string& path) {
  if (report.cached_scores.size() != report.rows.size() || report.cached_labels.size() == 0) return false;
  const int row_h = 34, pad = 14, label_w = 150, plot_w = 480;
  const int width = label_w + plot_w + pad * 2;
  const int height = pad * 2 + row_h * static_cast<int>(report.rows.size()) + 24;
  std::ostringstream svg;
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height << "'>\n";
  svg << "<text x='" << pad << "' y='" << pad + 4 << "' font-size='13' font-family='sans-serif'>"
      << "normalized scores; x=0.5 is the classification boundary</text>\n";
  const double x0 = label_w, x1 = label_w + plot_w;
  const double boundary = x0 + 0.5 * plot_w;
  int y = pad + 16;
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    svg << "<text x='" << pad << "' y='" << y + row_h / 2 << "' font-size='12' font-family='sans-serif'>"
        << report.rows[r].pattern.render(report.modality_names) << "</text>\n";
    svg << "<line x1='" << x0 << "' y1='" << y + row_h / 2 << "' x2='" << x1 << "' y2='" << y + row_h / 2
        << "' stroke='#cccccc'/>\n";
    const Eigen::VectorXd& scores = report.cached_scores[r];
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      const double cx = x0 + scores(i) * plot_w;
      // Deterministic vertical jitter so overlapping scores stay visible.
      const double cy = y + 6 + (static_cast<double>(i % 11) / 10.0) * (row_h - 12);
      svg << "<circle cx='" << cx << "' cy='" << cy << "' r='1.6' fill='"
          << (report.cached_labels(i) == 1 ? "#e08214" : "#4878cf") << "' fill-opacity='0.55'/>\n";
    }
    y += row_h;
  }
  svg << "<line x1='" << boundary << "' y1='" << pad + 10 << "' x2='" << boundary << "' y2='" << y
      << "' stroke='#333333' stroke-dasharray='4,3'/>\n";
  svg << "</svg>\n";
  write_text_file(path, svg.str());
  return true;
}

}  // namespace mmkd
