#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mmkd/model.hpp"
#include "mmkd/patterns.hpp"
#include "mmkd/synth_data.hpp"

namespace mmkd {

/// Binary error split: apcer over attack (label 1) samples, bpcer over bona
/// fide (label 0) samples, and their exact mean. All fractions in [0, 1].
struct BinaryErrorBreakdown {
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
};

/// Requires binary labels with both classes present.
BinaryErrorBreakdown acer(const Eigen::VectorXi& predictions, const Eigen::VectorXi& labels);

struct ReportRow {
  DropoutPattern pattern;      ///< empty pattern marks the average footer
  double error_rate_pct = 0.0;
  double acer_pct = 0.0;       ///< meaningful only for binary tasks
  Eigen::Index n = 0;
};

/// Per-combination evaluation table, one row per nonempty pattern in
/// canonical order plus an average footer. The cached per-sample scores feed
/// the score scatter plot only and are excluded from serialization and
/// equality.
struct CombinationReport {
  std::vector<std::string> modality_names;
  int num_classes = 0;
  std::vector<ReportRow> rows;
  ReportRow average;

  std::vector<Eigen::VectorXd> cached_scores;  ///< per row, positive-class probability (binary only)
  Eigen::VectorXi cached_labels;

  bool has_acer() const { return num_classes == 2; }

  friend bool operator==(const CombinationReport& a, const CombinationReport& b);
};

/// Forces each nonempty pattern on every test sample and scores the task
/// head. The model is read-only.
CombinationReport evaluate_combinations(const DeploymentNet& net, const Dataset& data);

/// CSV with header pattern,error_rate,acer,n (the acer column is omitted for
/// multiclass reports); values are percentages in shortest round-trip form.
std::string report_to_csv(const CombinationReport& report);
CombinationReport parse_report_csv(const std::string& csv_text, const std::vector<std::string>& modality_names,
                                   int num_classes);

std::string report_to_json(const CombinationReport& report);
CombinationReport parse_report_json(const std::string& json_text);

void write_text_file(const std::string& path, const std::string& content);

/// Per-combination error bar chart.
void write_report_svg(const CombinationReport& report, const std::string& path);

/// 1-D scatter of normalized positive-class scores per combination with the
/// 0.5 boundary marked. Requires cached scores; returns false when absent.
bool write_score_scatter_svg(const CombinationReport& report, const std::string& path);

}  // namespace mmkd
