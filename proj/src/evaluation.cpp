#include "inout/evaluation.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "inout/errors.hpp"

namespace inout {

namespace {

std::size_t check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  if (scores.empty()) throw ValidationError("metrics need at least one sample");
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ValidationError("scores must be finite");
    positives += static_cast<std::size_t>(labels[i]);
  }
  if (positives == 0) throw MetricError("precision/recall undefined: no positive labels");
  return positives;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  const std::size_t positives = check_inputs(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0, prev_recall = 0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] ? tp : fp)++;
      ++i;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

OperatingPoint precision_recall_at_threshold(std::span<const double> scores, std::span<const int> labels,
                                             double threshold) {
  const std::size_t positives = check_inputs(scores, labels);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) (labels[i] ? tp : fp)++;
  }
  OperatingPoint op;
  op.no_predictions = tp + fp == 0;
  op.precision = op.no_predictions ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  op.recall = static_cast<double>(tp) / static_cast<double>(positives);
  return op;
}

MetricsTriple compute_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  const OperatingPoint op = precision_recall_at_threshold(scores, labels, threshold);
  return {average_precision(scores, labels), op.precision, op.recall};
}

MeanStd aggregate(std::span<const double> values) {
  if (values.empty()) throw ValidationError("aggregate: empty list");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

ReportRow MetricsReport::from_runs(std::string method, int n_aug, std::span<const MetricsTriple> runs) {
  if (runs.empty()) throw ValidationError("report row needs at least one run");
  std::vector<double> ap, pr, rc;
  for (const auto& r : runs) {
    ap.push_back(r.ap);
    pr.push_back(r.precision);
    rc.push_back(r.recall);
  }
  const auto a = aggregate(ap), p = aggregate(pr), r = aggregate(rc);
  return {std::move(method), n_aug, {a.mean, p.mean, r.mean}, {a.std, p.std, r.std}, static_cast<int>(runs.size())};
}

ReportRow MetricsReport::average_row() const {
  ReportRow avg{"Average", 0, {}, {}, 0};
  if (rows.empty()) return avg;
  std::vector<double> cols[6];
  for (const auto& row : rows) {
    cols[0].push_back(row.mean.ap);
    cols[1].push_back(row.mean.precision);
    cols[2].push_back(row.mean.recall);
    cols[3].push_back(row.std.ap);
    cols[4].push_back(row.std.precision);
    cols[5].push_back(row.std.recall);
    avg.num_seeds += row.num_seeds;
  }
  avg.mean = {aggregate(cols[0]).mean, aggregate(cols[1]).mean, aggregate(cols[2]).mean};
  avg.std = {aggregate(cols[3]).mean, aggregate(cols[4]).mean, aggregate(cols[5]).mean};
  return avg;
}

double round_3dp(double value) {
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double r = std::nearbyint(value * 1000.0);
  std::fesetround(saved);
  return r / 1000.0;
}

std::string format_3dp(double value) {
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const long long r = std::llrint(value * 1000.0);
  std::fesetround(saved);
  const long long mag = r < 0 ? -r : r;
  char buf[48];
  if (mag / 1000 == 0) {
    std::snprintf(buf, sizeof(buf), "%s.%03lld", r < 0 ? "-" : "", mag % 1000);
  } else {
    std::snprintf(buf, sizeof(buf), "%s%lld.%03lld", r < 0 ? "-" : "", mag / 1000, mag % 1000);
  }
  return buf;
}

std::string format_cell(double mean, double std) { return format_3dp(mean) + " (" + format_3dp(std) + ")"; }

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// Accepts ".626", "0.626", "1.000".
double parse_number(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) throw ValidationError("report: empty numeric field");
  std::size_t used = 0;
  const double v = std::stod(t.front() == '.' ? "0" + t : t, &used);
  return v;
}

void parse_cell(const std::string& cell, double& mean, double& std) {
  const auto open = cell.find('('), close = cell.find(')');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw ValidationError("report: malformed cell '" + cell + "'");
  }
  mean = parse_number(cell.substr(0, open));
  std = parse_number(cell.substr(open + 1, close - open - 1));
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", round_3dp(v));
  return buf;
}

}  // namespace

std::string emit_report(const MetricsReport& report, ReportFormat format) {
  std::ostringstream out;
  char meta[96];
  std::snprintf(meta, sizeof(meta), "# threshold=%s std=%s", csv_number(report.threshold).c_str(),
                report.std_convention.c_str());
  if (format == ReportFormat::csv) {
    out << meta << '\n';
    out << "method,n_aug,num_seeds,ap_mean,ap_std,precision_mean,precision_std,recall_mean,recall_std\n";
    auto line = [&](const ReportRow& r, bool average) {
      out << r.method << ',' << (average ? std::string() : std::to_string(r.n_aug)) << ',' << r.num_seeds << ','
          << csv_number(r.mean.ap) << ',' << csv_number(r.std.ap) << ',' << csv_number(r.mean.precision) << ','
          << csv_number(r.std.precision) << ',' << csv_number(r.mean.recall) << ',' << csv_number(r.std.recall) << '\n';
    };
    for (const auto& r : report.rows) line(r, false);
    if (!report.rows.empty()) line(report.average_row(), true);
    return out.str();
  }
  constexpr std::size_t kFirst = 22, kCell = 14;
  out << pad("N_aug", kFirst) << " | " << pad("AP", kCell) << " | " << pad("Precision", kCell) << " | Recall\n";
  const std::string rule(kFirst + 3 * (kCell + 3) + 2, '-');
  out << rule << '\n';
  auto line = [&](const std::string& label, const ReportRow& r) {
    out << pad(label, kFirst) << " | " << pad(format_cell(r.mean.ap, r.std.ap), kCell) << " | "
        << pad(format_cell(r.mean.precision, r.std.precision), kCell) << " | "
        << format_cell(r.mean.recall, r.std.recall) << '\n';
  };
  for (const auto& r : report.rows) line(r.method + " " + std::to_string(r.n_aug), r);
  if (!report.rows.empty()) {
    out << rule << '\n';
    line("Average", report.average_row());
  }
  out << meta << '\n';
  return out.str();
}

MetricsReport parse_report(const std::string& document, ReportFormat format) {
  MetricsReport report;
  std::istringstream in(document);
  std::string line;
  auto parse_meta = [&](const std::string& l) {
    std::istringstream kv(l.substr(1));
    for (std::string tok; kv >> tok;) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      if (tok.substr(0, eq) == "threshold") report.threshold = parse_number(tok.substr(eq + 1));
      if (tok.substr(0, eq) == "std") report.std_convention = tok.substr(eq + 1);
    }
  };
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    if (line.front() == '#') {
      parse_meta(line);
      continue;
    }
    if (format == ReportFormat::csv) {
      if (line.rfind("method,", 0) == 0) continue;
      const auto f = split(line, ',');
      if (f.size() != 9) throw ValidationError("report: expected 9 CSV fields in '" + line + "'");
      if (f[0] == "Average") continue;
      ReportRow r;
      r.method = f[0];
      r.n_aug = std::stoi(f[1]);
      r.num_seeds = std::stoi(f[2]);
      r.mean = {parse_number(f[3]), parse_number(f[5]), parse_number(f[7])};
      r.std = {parse_number(f[4]), parse_number(f[6]), parse_number(f[8])};
      report.rows.push_back(std::move(r));
    } else {
      if (line.front() == '-' || line.rfind("N_aug", 0) == 0) continue;
      const auto f = split(line, '|');
      if (f.size() != 4) throw ValidationError("report: expected 4 table columns in '" + line + "'");
      const std::string label = trim(f[0]);
      if (label == "Average") continue;
      const auto space = label.rfind(' ');
      if (space == std::string::npos) throw ValidationError("report: row label needs method and N_aug: " + label);
      ReportRow r;
      r.method = label.substr(0, space);
      r.n_aug = std::stoi(label.substr(space + 1));
      parse_cell(f[1], r.mean.ap, r.std.ap);
      parse_cell(f[2], r.mean.precision, r.std.precision);
      parse_cell(f[3], r.mean.recall, r.std.recall);
      // The text table does not carry seed counts.
      r.num_seeds = 0;
      report.rows.push_back(std::move(r));
    }
  }
  return report;
}

}  // namespace inout
