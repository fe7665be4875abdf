#include <filesystem>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cirkf/io.hpp"
#include "run_config.hpp"

using namespace cirkf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("cirkf_io_test_" + name);
  fs::remove_all(d);
  return d;
}

ExperimentReport tiny_report() {
  ExperimentReport r;
  r.models = {Model::naive, Model::kf};
  r.seed = 5;
  r.cohort_seed = 6;
  r.config_hash = "abc";
  for (int g = 0; g < 2; ++g) {
    GroupSummary gs;
    gs.label = "g" + std::to_string(g);
    gs.lower = 0.1 * g;
    gs.upper = 0.1 * (g + 1);
    gs.n_clients = 3;
    gs.n_single_class = 1;
    gs.models = {ModelSummary{0.5, 0.02, 2, 3, 0},
                 ModelSummary{g == 0 ? std::nan("") : 0.71, 0.1, 2, 3, 1}};
    r.groups.push_back(gs);
  }
  ClientEvaluation c;
  c.client_id = "c000001";
  c.group = 1;
  c.realized_prop = 0.03;
  c.n_test = 200;
  c.n_test_frauds = 4;
  c.metrics = {MetricPair{0.5, 0.02}, MetricPair{std::nullopt, std::nullopt}};
  c.errors = {"", "calibrate: constant observation series"};
  r.clients.push_back(c);
  return r;
}

}  // namespace

TEST(Csv, SeriesRoundTripIsExact) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  TransactionSeries s;
  s.client_id = "c1";
  s.labels.emplace();
  for (int i = 0; i < 100; ++i) {
    s.timestamps.push_back(i + u(rng));
    s.risk_scores.push_back(u(rng) * 0.999);
    s.labels->push_back(u(rng) < 0.1 ? 1 : 0);
  }
  const auto back = io::parse_series_csv(io::series_csv(s), "c1");
  EXPECT_EQ(back.timestamps, s.timestamps);
  EXPECT_EQ(back.risk_scores, s.risk_scores);
  EXPECT_EQ(back.labels, s.labels);
}

TEST(Csv, UnlabelledSeries) {
  const auto s = io::parse_series_csv("t,risk_score\n0,0.1\n1,0.2\r\n", "u");
  EXPECT_FALSE(s.labels.has_value());
  EXPECT_EQ(s.risk_scores, (std::vector<double>{0.1, 0.2}));
}

TEST(Csv, Errors) {
  EXPECT_THROW(io::parse_series_csv("", "x"), DataError);
  EXPECT_THROW(io::parse_series_csv("time,score,label\n0,0.1,0\n", "x"), DataError);
  EXPECT_THROW(io::parse_series_csv("t,risk_score,lbl\n0,0.1,0\n", "x"), DataError);
  EXPECT_THROW(io::parse_series_csv("t,risk_score,label\n0,0.1\n", "x"), DataError);
  EXPECT_THROW(io::parse_series_csv("t,risk_score,label\n0,abc,0\n", "x"), DataError);
  EXPECT_THROW(io::parse_series_csv("t,risk_score,label\n0,0.1,2\n", "x"), DataError);
  EXPECT_THROW(io::parse_series_csv("t,risk_score,label\n0,1.5,0\n", "x"), DataError);
  EXPECT_THROW(io::parse_series_csv("t,risk_score,label\n1,0.1,0\n0,0.1,0\n", "x"), DataError);
}

TEST(Csv, PathAndTraceHeaders) {
  const auto p = simulate_path({0.4, 0.03, 0.1}, 0.01, 0.5, 3, 1);
  const auto text = io::path_csv(p);
  EXPECT_EQ(text.substr(0, text.find('\n')), io::kPathCsvHeader);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);

  const std::vector<double> y{-0.03, -0.02};
  const auto r = filter_series(y, {0.4, 0.03, 0.1}, 0.01, 1.0);
  const auto trace = io::filter_trace_csv(r, y, 0.0, 1.0);
  EXPECT_EQ(trace.substr(0, trace.find('\n')), io::kTraceCsvHeader);
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 3);
}

TEST(Json, ParamsRoundTripAndKeys) {
  const CirParams p{0.4, 0.03, 0.1};
  EXPECT_EQ(io::params_from_json(io::to_json(p)), p);
  EXPECT_THROW(io::params_from_json(nlohmann::json{{"kappa", 1.0}}), DataError);

  const auto client = generate_client({0.01, 0.02, std::sqrt(2.0 * 0.01 * 0.02 / 0.05)}, 1000,
                                      0.05, 0.8, 3);
  const auto model = fit_kf(client.series.risk_scores);
  const auto j = io::kf_model_json(model);
  for (const char* k : {"kappa", "theta", "sigma", "w", "loglik", "converged", "n_obs",
                        "alpha_shift", "theta_star", "sigma_star", "kappa_refit", "n_negative"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["n_obs"].get<std::size_t>(), 1000u);

  const auto b = io::baseline_json("LinearPoisson", PolyIntensity{{0.01, 2e-5}}, -12.5);
  EXPECT_EQ(b["model"], "LinearPoisson");
  EXPECT_EQ(b["coeffs"].size(), 2u);
  EXPECT_EQ(b["loglik"].get<double>(), -12.5);
}

TEST(Cohort, WriteReadRoundTrip) {
  CohortConfig cfg;
  cfg.n_clients = 1;
  cfg.group_boundaries = {0.01, 0.05};
  const auto cohort = generate_cohort(cfg);
  const auto dir = fresh_dir("cohort");
  io::write_cohort(cohort, cfg, dir);
  const auto back = io::read_cohort(dir);
  EXPECT_EQ(back.seed, cohort.seed);
  EXPECT_EQ(back.attempts, cohort.attempts);
  ASSERT_EQ(back.groups.size(), 2u);
  for (std::size_t g = 0; g < 2; ++g) {
    EXPECT_EQ(back.groups[g].upper, cohort.groups[g].upper);
    ASSERT_EQ(back.groups[g].clients.size(), 1u);
    const auto& a = cohort.groups[g].clients[0];
    const auto& c = back.groups[g].clients[0];
    EXPECT_EQ(c.series.client_id, a.series.client_id);
    EXPECT_EQ(c.series.risk_scores, a.series.risk_scores);
    EXPECT_EQ(c.series.labels, a.series.labels);
    EXPECT_EQ(c.true_params, a.true_params);
    EXPECT_EQ(c.label_jump, a.label_jump);
    EXPECT_TRUE(c.intensity.empty());
  }
  const auto m = io::read_json(dir / "manifest.json");
  EXPECT_EQ(m["schema_version"], io::kSchemaVersion);
  EXPECT_EQ(m["config"]["n_clients"], 1);
  fs::remove_all(dir);
  EXPECT_THROW(io::read_cohort(dir), DataError);
}

TEST(Report, JsonRoundTrip) {
  const auto r = tiny_report();
  const auto back = io::report_from_json(io::report_json(r));
  EXPECT_EQ(back.models, r.models);
  EXPECT_EQ(back.config_hash, "abc");
  ASSERT_EQ(back.groups.size(), 2u);
  EXPECT_TRUE(std::isnan(back.groups[0].models[1].median_auc));
  EXPECT_EQ(back.groups[1].models[1].median_auc, 0.71);
  EXPECT_EQ(back.groups[1].models[1].n_failed, 1u);
  ASSERT_EQ(back.clients.size(), 1u);
  EXPECT_EQ(back.clients[0].errors[1], "calibrate: constant observation series");
  EXPECT_FALSE(back.clients[0].metrics[1].auc.has_value());
  EXPECT_EQ(back.clients[0].metrics[0].ap, 0.02);
  EXPECT_THROW(io::report_from_json(nlohmann::json::object()), DataError);
}

TEST(Report, TableLayout) {
  const auto r = tiny_report();
  EXPECT_EQ(io::table_csv(r, io::Metric::auc),
            "model,group_1,group_2\nNaiveApproach,0.5,0.5\nKFApproach,NA,0.70999999999999996\n");
  const auto pts = io::plot_points_csv(r, io::Metric::ap);
  EXPECT_EQ(pts.substr(0, pts.find('\n')), "group,lower,upper,model,median,n");
  EXPECT_EQ(std::count(pts.begin(), pts.end(), '\n'), 5);

  const auto dir = fresh_dir("report");
  io::write_report(r, dir);
  for (const char* f : {"report.json", "auc_table.csv", "ap_table.csv", "auc_points.csv",
                        "ap_points.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  fs::remove_all(dir);
}

TEST(RunConfig, ParseAndMerge) {
  const auto c = cli::parse_run_config(
      nlohmann::json{{"seed", 9}, {"dt", 0.5}, {"models", {"kf", "naive"}}, {"traces", true}});
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.dt, 0.5);
  EXPECT_EQ(c.models->size(), 2u);
  EXPECT_FALSE(c.horizon.has_value());

  cli::RunConfig top;
  top.dt = 2.0;
  top.horizon = 3.0;
  const auto m = cli::merge(c, top);
  EXPECT_EQ(m.seed, 9u);
  EXPECT_EQ(m.dt, 2.0);
  EXPECT_EQ(m.horizon, 3.0);
}

TEST(RunConfig, Rejections) {
  EXPECT_THROW(cli::parse_run_config(nlohmann::json{{"sed", 1}}), cli::UsageError);
  EXPECT_THROW(cli::parse_run_config(nlohmann::json{{"dt", "fast"}}), cli::UsageError);
  EXPECT_THROW(cli::parse_run_config(nlohmann::json::array()), cli::UsageError);
}
