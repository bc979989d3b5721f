#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace inout {

struct MetricsTriple {
  double ap = 0;
  double precision = 0;
  double recall = 0;
  friend bool operator==(const MetricsTriple&, const MetricsTriple&) = default;
};

// Step-wise area under the precision-recall curve: sum over descending
// distinct score thresholds of (R_k - R_{k-1}) * P_k. Tied scores form one
// threshold step. Throws MetricError when no label is positive.
double average_precision(std::span<const double> scores, std::span<const int> labels);

struct OperatingPoint {
  double precision = 0;
  double recall = 0;
  // No score reached the threshold; precision is reported as 0.
  bool no_predictions = false;
};

// Predicted positive iff score >= threshold.
OperatingPoint precision_recall_at_threshold(std::span<const double> scores, std::span<const int> labels,
                                             double threshold);

MetricsTriple compute_metrics(std::span<const double> scores, std::span<const int> labels, double threshold);

struct MeanStd {
  double mean = 0;
  double std = 0;
};

// Arithmetic mean and population standard deviation.
MeanStd aggregate(std::span<const double> values);

struct ReportRow {
  std::string method;
  int n_aug = 0;
  MetricsTriple mean;
  MetricsTriple std;
  int num_seeds = 1;
};

struct MetricsReport {
  std::vector<ReportRow> rows;
  double threshold = 0.5;
  std::string std_convention = "population";

  // Mean of the row means and mean of the row stds.
  ReportRow average_row() const;
  static ReportRow from_runs(std::string method, int n_aug, std::span<const MetricsTriple> runs);
};

// Round-half-even to three decimals, leading zero dropped: 0.626 -> ".626".
std::string format_3dp(double value);
std::string format_cell(double mean, double std);
double round_3dp(double value);

enum class ReportFormat { csv, text };

std::string emit_report(const MetricsReport& report, ReportFormat format);
MetricsReport parse_report(const std::string& document, ReportFormat format);

}  // namespace inout
