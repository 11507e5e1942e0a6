#include <gtest/gtest.h>

#include <random>

#include "ecgenkf/bench.hpp"

using namespace ecgenkf;
using namespace ecgenkf::bench;

namespace {

RecordInput synthetic_record(const std::string& id) {
  const auto seed = hash_string(id);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.75, 0.95);
  std::vector<double> rr(12);
  for (auto& v : rr) v = u(rng);
  const auto syn = synthesize(default_morphology(), rr, 360.0, 0.0, seed);
  return {id, syn.signal, syn.r_peaks};
}

Signal white_noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return {v, 360.0};
}

BenchResult run(const BenchPlan& plan) {
  return run_plan(
      plan, [](const std::string& id, std::size_t) { return synthetic_record(id); },
      [](const std::string&, std::size_t) { return white_noise(3000, 99); });
}

BenchPlan small_plan() {
  BenchPlan p;
  p.records = {"a", "b"};
  p.methods = {Method::sg, Method::wavelet, Method::tvd, Method::nlms};
  p.snr_levels = {6.0, 12.0};
  p.seed = 42;
  return p;
}

}  // namespace

TEST(Bench, SingleCellPlan) {
  BenchPlan p;
  p.records = {"a"};
  p.methods = {Method::tvd};
  p.snr_levels = {12.0};
  const auto r = run(p);
  ASSERT_EQ(r.cells.size(), 1u);
  ASSERT_EQ(r.aggregates.size(), 1u);
  EXPECT_TRUE(r.cells[0].ok()) << r.cells[0].status;
  EXPECT_EQ(r.aggregates[0].record_id, "MEAN");
  EXPECT_EQ(r.aggregates[0].report.corr, r.cells[0].report.corr);
  // snr_in is measured after the warm-up skip, so it is close to but not exactly the level
  EXPECT_NEAR(r.cells[0].report.snr_in, 12.0, 1.0);
  const auto csv = results_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "record,channel,method,noise_kind,level_db,snr_in_db,snr_out_db,snr_improvement_db,rmse_mv,prd_pct,corr,"
            "params_digest,seed,status");
}

TEST(Bench, AllMethodsRun) {
  BenchPlan p;
  p.records = {"a"};
  p.snr_levels = {12.0};
  const auto r = run(p);
  ASSERT_EQ(r.cells.size(), kAllMethods.size());
  for (const auto& c : r.cells) {
    EXPECT_TRUE(c.ok()) << to_string(c.method) << ": " << c.status;
    EXPECT_TRUE(std::isfinite(c.report.snr_improvement)) << to_string(c.method);
  }
  EXPECT_EQ(r.failed(), 0u);
}

TEST(Bench, DeterministicAndOrderIndependent) {
  const auto a = run(small_plan());
  const auto b = run(small_plan());
  EXPECT_EQ(results_csv(a), results_csv(b));

  auto permuted = small_plan();
  std::reverse(permuted.records.begin(), permuted.records.end());
  std::reverse(permuted.methods.begin(), permuted.methods.end());
  std::reverse(permuted.snr_levels.begin(), permuted.snr_levels.end());
  permuted.jobs = 3;
  EXPECT_EQ(results_csv(run(permuted)), results_csv(a));
}

TEST(Bench, SubsetRowsMatchFullPlan) {
  const auto full = run(small_plan());
  auto sub = small_plan();
  sub.records = {"b"};
  sub.methods = {Method::wavelet};
  sub.snr_levels = {12.0};
  const auto one = run(sub);
  ASSERT_EQ(one.cells.size(), 1u);
  const auto it = std::find_if(full.cells.begin(), full.cells.end(), [](const BenchCell& c) {
    return c.record_id == "b" && c.method == Method::wavelet && c.input_snr == 12.0;
  });
  ASSERT_NE(it, full.cells.end());
  EXPECT_EQ(table_row(*it), table_row(one.cells[0]));
}

TEST(Bench, CellSeedsAndDigests) {
  EXPECT_EQ(cell_seed(1, "118", Method::enkf, 12.0), cell_seed(1, "118", Method::enkf, 12.0));
  EXPECT_NE(cell_seed(1, "118", Method::enkf, 12.0), cell_seed(2, "118", Method::enkf, 12.0));
  EXPECT_NE(cell_seed(1, "118", Method::enkf, 12.0), cell_seed(1, "119", Method::enkf, 12.0));
  EXPECT_NE(cell_seed(1, "118", Method::enkf, 12.0), cell_seed(1, "118", Method::ekf, 12.0));
  EXPECT_NE(cell_seed(1, "118", Method::enkf, 12.0), cell_seed(1, "118", Method::enkf, 18.0));

  MethodParams p;
  const auto d = params_digest(Method::tvd, p);
  EXPECT_EQ(d.size(), 16u);
  EXPECT_EQ(d, params_digest(Method::tvd, p));
  p.enkf.seed = 12345;  // seeds are per cell, not part of the digest
  EXPECT_EQ(d, params_digest(Method::tvd, p));
  p.baselines.tvd.lambda_scale = 0.3;
  EXPECT_NE(d, params_digest(Method::tvd, p));
  EXPECT_NE(params_digest(Method::sg, p), params_digest(Method::wavelet, p));
}

TEST(Bench, FailedCellsAreReported) {
  BenchPlan p;
  p.records = {"a"};
  p.methods = {Method::sg};
  p.snr_levels = {6.0};
  p.params.baselines.sg.window = 4;  // even window: the cell fails, the plan does not
  const auto r = run(p);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_EQ(r.failed(), 1u);
  EXPECT_NE(r.cells[0].status.find("failed:"), std::string::npos);
  EXPECT_TRUE(std::isnan(r.cells[0].report.corr));
  EXPECT_EQ(r.aggregates[0].status.rfind("failed", 0), 0u);
}

TEST(Bench, AggregateIsMeanOfSuccessfulCells) {
  BenchCell a, b, c;
  a.record_id = "x";
  b.record_id = "y";
  c.record_id = "z";
  a.report.corr = 0.5;
  b.report.corr = 0.9;
  c.status = "failed: boom";
  const auto agg = aggregate({a, b, c});
  ASSERT_EQ(agg.size(), 1u);
  EXPECT_DOUBLE_EQ(agg[0].report.corr, 0.7);
  EXPECT_EQ(agg[0].status, "partial: 2/3");
}

TEST(Bench, PlanJsonRoundTrip) {
  auto p = small_plan();
  p.duration_s = 8.0;
  const nlohmann::json j = p;
  const auto q = j.get<BenchPlan>();
  EXPECT_EQ(nlohmann::json(q), j);
  EXPECT_THROW(nlohmann::json({{"records", {"1"}}, {"methods", {"eemd"}}}).get<BenchPlan>(), ConfigError);
  EXPECT_THROW(nlohmann::json({{"records", nlohmann::json::array()}}).get<BenchPlan>(), ConfigError);
}

TEST(Plot, FlatSeriesRenders) {
  const auto svg = emit_plot({{"flat", {{0.0, 1.0}, {6.0, 1.0}, {12.0, 1.0}}}}, {"t", "x", "y"});
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
}

TEST(Plot, TwoSeriesTwoPolylinesAndLegend) {
  const auto svg = emit_plot({{"enkf", {{6, 1}, {12, 2}}}, {"a<b", {{6, 0.5}, {12, 3}}}}, {"t", "x", "y"});
  std::size_t n = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++n;
  EXPECT_EQ(n, 2u);
  EXPECT_NE(svg.find("enkf"), std::string::npos);
  EXPECT_NE(svg.find("a&lt;b"), std::string::npos);
  EXPECT_EQ(svg, emit_plot({{"enkf", {{6, 1}, {12, 2}}}, {"a<b", {{6, 0.5}, {12, 3}}}}, {"t", "x", "y"}));
}

TEST(Plot, InvalidSeriesRejected) {
  EXPECT_THROW(emit_plot({}, {"t", "x", "y"}), ConfigError);
  EXPECT_THROW(emit_plot({{"one", {{1.0, 2.0}}}}, {"t", "x", "y"}), ConfigError);
}

TEST(Plot, MetricPlotsFromBench) {
  const auto r = run(small_plan());
  const auto plots = metric_plots(r);
  ASSERT_EQ(plots.size(), 4u);
  EXPECT_EQ(plots[0].file_name, "snr_improvement.svg");
  EXPECT_EQ(plots[3].file_name, "rmse.svg");
}
