#include <doctest.h>

#include <cmath>
#include <random>

#include "inout/errors.hpp"
#include "inout/evaluation.hpp"
#include "oracles.hpp"
#include "reference_table.hpp"

using namespace inout;

TEST_CASE("AP of a hand-worked ranking") {
  // Ranking + - + : precision 1 at recall 1/2, 2/3 at recall 1.
  const std::vector<double> s{0.9, 0.8, 0.7};
  const std::vector<int> l{1, 0, 1};
  CHECK(average_precision(s, l) == doctest::Approx(0.5 * 1.0 + 0.5 * (2.0 / 3.0)));
  CHECK(average_precision(s, l) == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("perfect and reversed rankings") {
  for (int n = 1; n <= 6; ++n) {
    for (int p = 1; p <= 6; ++p) {
      std::vector<double> s;
      std::vector<int> l;
      for (int i = 0; i < p; ++i) s.push_back(1.0 + i), l.push_back(1);
      for (int i = 0; i < n; ++i) s.push_back(-1.0 - i), l.push_back(0);
      CHECK(average_precision(s, l) == 1.0);
      for (auto& v : s) v = -v;
      CHECK(average_precision(s, l) == doctest::Approx(oracle::reversed_ranking_ap(n, p)).epsilon(1e-12));
    }
  }
}

TEST_CASE("tied scores form one step") {
  const std::vector<double> s{0.5, 0.5, 0.5, 0.5};
  const std::vector<int> l{1, 0, 0, 1};
  CHECK(average_precision(s, l) == doctest::Approx(0.5));
  const std::vector<int> l2{0, 1, 1, 0};
  CHECK(average_precision(s, l2) == average_precision(s, l));
}

TEST_CASE("AP agrees with the brute-force threshold sweep") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 12);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 5) / 4.0;
      l[i] = static_cast<int>(rng() % 2);
    }
    l[rng() % n] = 1;
    CHECK(std::abs(average_precision(s, l) - oracle::brute_force_ap(s, l)) <= 1e-9);
  }
}

TEST_CASE("metric input errors") {
  CHECK_THROWS_AS(average_precision(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), MetricError);
  CHECK_THROWS_AS(average_precision(std::vector<double>{0.1}, std::vector<int>{0, 1}), ValidationError);
  CHECK_THROWS_AS(average_precision(std::vector<double>{0.1}, std::vector<int>{2}), ValidationError);
  CHECK_THROWS_AS(average_precision(std::vector<double>{NAN}, std::vector<int>{1}), ValidationError);
  CHECK_THROWS_AS(precision_recall_at_threshold(std::vector<double>{0.9}, std::vector<int>{0}, 0.5), MetricError);
}

TEST_CASE("operating point at the threshold") {
  const std::vector<double> s{0.9, 0.5, 0.49, 0.1};
  const std::vector<int> l{1, 0, 1, 0};
  const OperatingPoint op = precision_recall_at_threshold(s, l, 0.5);
  CHECK(op.precision == 0.5);
  CHECK(op.recall == 0.5);
  CHECK_FALSE(op.no_predictions);
  const OperatingPoint none = precision_recall_at_threshold(s, l, 0.95);
  CHECK(none.no_predictions);
  CHECK(none.precision == 0.0);
  CHECK(none.recall == 0.0);
  const auto c = oracle::confusion(s, l, 0.5);
  CHECK(op.precision == static_cast<double>(c.tp) / (c.tp + c.fp));
  const MetricsTriple m = compute_metrics(s, l, 0.5);
  CHECK(m.precision == op.precision);
  CHECK(m.ap == average_precision(s, l));
}

TEST_CASE("aggregate uses the population convention and is order invariant") {
  const std::vector<double> v{0.2, 0.4, 0.6, 0.8};
  const MeanStd a = aggregate(v);
  CHECK(a.mean == doctest::Approx(0.5));
  CHECK(a.std == doctest::Approx(std::sqrt(0.05)));
  const std::vector<double> r{0.8, 0.2, 0.6, 0.4};
  CHECK(aggregate(r).mean == doctest::Approx(a.mean));
  CHECK(aggregate(r).std == doctest::Approx(a.std));
  CHECK(aggregate(std::vector<double>{0.7}).std == 0.0);
  CHECK(aggregate(std::vector<double>{0.3, 0.3, 0.3}).std == 0.0);
  CHECK_THROWS_AS(aggregate(std::vector<double>{}), ValidationError);
}

TEST_CASE("three-decimal formatting rounds half to even") {
  CHECK(format_3dp(0.626) == ".626");
  CHECK(format_3dp(0.0625) == ".062");
  CHECK(format_3dp(0.1875) == ".188");
  CHECK(format_3dp(0.0) == ".000");
  CHECK(format_3dp(1.0) == "1.000");
  CHECK(format_3dp(-0.0625) == "-.062");
  CHECK(format_cell(0.626, 0.059) == ".626 (.059)");
  CHECK(round_3dp(0.0625) == 0.062);
}

TEST_CASE("report rows from runs") {
  const std::vector<MetricsTriple> runs{{0.5, 0.6, 0.7}, {0.7, 0.8, 0.9}};
  const ReportRow row = MetricsReport::from_runs("inout", 40, runs);
  CHECK(row.mean.ap == doctest::Approx(0.6));
  CHECK(row.std.ap == doctest::Approx(0.1));
  CHECK(row.num_seeds == 2);
  CHECK_THROWS_AS(MetricsReport::from_runs("x", 0, std::span<const MetricsTriple>{}), ValidationError);
}

TEST_CASE("published Average rows are the mean of the row means and of the row stds") {
  for (const reference::Block* b : {&reference::region_block(), &reference::diffusion_block()}) {
    MetricsReport report;
    report.rows.assign(b->rows.begin(), b->rows.end());
    const ReportRow avg = report.average_row();
    CHECK(std::abs(avg.mean.ap - b->average_mean.ap) <= 0.001);
    CHECK(std::abs(avg.mean.precision - b->average_mean.precision) <= 0.001);
    CHECK(std::abs(avg.mean.recall - b->average_mean.recall) <= 0.001);
    CHECK(std::abs(avg.std.ap - b->average_std.ap) <= 0.001);
    CHECK(std::abs(avg.std.precision - b->average_std.precision) <= 0.001);
    CHECK(std::abs(avg.std.recall - b->average_std.recall) <= 0.001);
  }
}

TEST_CASE("csv and text reports round trip at three decimals") {
  MetricsReport report;
  report.rows.assign(reference::diffusion_block().rows.begin(), reference::diffusion_block().rows.end());
  report.rows.push_back({"inout", 0, {0.1234, 0.5, 1.0}, {0.0, 0.01, 0.0625}, 1});
  for (ReportFormat f : {ReportFormat::csv, ReportFormat::text}) {
    const std::string doc = emit_report(report, f);
    CHECK(doc.find("threshold=0.500") != std::string::npos);
    CHECK(doc.find("std=population") != std::string::npos);
    CHECK(doc.find("Average") != std::string::npos);
    const MetricsReport back = parse_report(doc, f);
    REQUIRE(back.rows.size() == report.rows.size());
    for (std::size_t i = 0; i < back.rows.size(); ++i) {
      const auto& a = report.rows[i];
      const auto& b = back.rows[i];
      CHECK(b.method == a.method);
      CHECK(b.n_aug == a.n_aug);
      CHECK(b.mean.ap == round_3dp(a.mean.ap));
      CHECK(b.std.precision == round_3dp(a.std.precision));
      CHECK(b.std.recall == round_3dp(a.std.recall));
      CHECK(b.num_seeds == (f == ReportFormat::csv ? a.num_seeds : 0));
    }
    CHECK(emit_report(back, f).size() > 0);
  }
  const std::string text = emit_report(report, ReportFormat::text);
  CHECK(text.find("diffusion_only 80") != std::string::npos);
  CHECK(text.find(".547 (.086)") != std::string::npos);
  CHECK_THROWS_AS(parse_report("a,b,c\n", ReportFormat::csv), ValidationError);
}
