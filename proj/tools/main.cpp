// cirkf: command-line driver for simulation, cohort generation, calibration,
// prediction, the evaluation experiment and report rendering.
//
// Exit codes: 0 ok, 2 usage, 3 data error, 4 numerical failure.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cirkf/cirkf.hpp"
#include "cirkf/io.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using namespace cirkf;
using cirkf::cli::RunConfig;
using cirkf::cli::UsageError;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 20240601;

void require_usage(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

SamplingScheme parse_scheme(const std::string& s) {
  if (s == "exact") return SamplingScheme::exact;
  if (s == "euler") return SamplingScheme::euler_full_truncation;
  throw UsageError("--scheme must be 'exact' or 'euler'");
}

KfConfig kf_config(const RunConfig& c) {
  KfConfig k;
  k.dt = c.dt.value_or(1.0);
  k.horizon = c.horizon.value_or(k.dt);
  require_usage(k.dt > 0.0, "--dt must be > 0");
  require_usage(k.horizon > 0.0, "--horizon must be > 0");
  k.calibration.init.variance = c.init_variance.value_or(kDefaultInitialState.variance);
  k.calibration.init.lambda_filtered = c.init_lambda.value_or(kDefaultInitialState.lambda_filtered);
  require_usage(k.calibration.init.variance >= 0.0, "--init-variance must be >= 0");
  return k;
}

std::size_t thread_count(const RunConfig& c) {
  const std::size_t t = c.threads.value_or(0);
  return std::max<std::size_t>(1, t ? t : std::thread::hardware_concurrency());
}

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) body(i);
  };
  if (threads <= 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(worker);
}

void print_table(const ExperimentReport& r, io::Metric metric) {
  std::printf("%s medians\n%-18s", metric == io::Metric::auc ? "AUC" : "AP", "model");
  for (std::size_t g = 0; g < r.groups.size(); ++g) std::printf("  group%-2zu", g + 1);
  std::printf("\n");
  for (std::size_t k = 0; k < r.models.size(); ++k) {
    std::printf("%-18s", std::string(model_name(r.models[k])).c_str());
    for (const auto& g : r.groups) {
      const double v = io::summary_value(g.models[k], metric);
      if (std::isnan(v)) std::printf("  %7s", "NA");
      else std::printf("  %7.3f", v);
    }
    std::printf("\n");
  }
}

// ---- subcommands ------------------------------------------------------------

int cmd_simulate(const RunConfig& c) {
  const std::size_t n = c.n_steps.value_or(2000);
  require_usage(n >= 1, "--n must be >= 1");
  const double dt = c.dt.value_or(0.01);
  require_usage(dt > 0.0, "--dt must be > 0");
  const auto seed = c.seed.value_or(kDefaultSeed);
  const auto scheme = parse_scheme(c.scheme.value_or("exact"));
  const fs::path out = c.out.value_or("simulate");

  struct Set {
    std::string name;
    double lambda0;
    CirParams p;
  };
  std::vector<Set> sets;
  const Set base{"fig1_i", 0.04, CirParams{0.4, 0.03, 0.1}};
  if (c.lambda0 || c.kappa || c.theta || c.sigma) {
    sets.push_back(Set{"path", c.lambda0.value_or(base.lambda0),
                       CirParams{c.kappa.value_or(base.p.kappa), c.theta.value_or(base.p.theta),
                                 c.sigma.value_or(base.p.sigma)}});
  } else {
    sets = {base,
            {"fig1_ii", 0.04, {0.4, 0.08, 0.1}},
            {"fig1_iii", 0.04, {2.0, 0.03, 0.1}},
            {"fig1_iv", 0.04, {0.4, 0.03, 0.002}}};
  }
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const auto& s = sets[k];
    const auto path = simulate_path(s.p, s.lambda0, dt, n, child_seed(seed, k), scheme);
    const fs::path file = out / (s.name + ".csv");
    io::write_file_atomic(file, io::path_csv(path));
    std::printf("%s  kappa=%g theta=%g sigma=%g lambda0=%g  feller=%s\n", file.string().c_str(),
                s.p.kappa, s.p.theta, s.p.sigma, s.lambda0, s.p.feller_holds() ? "yes" : "no");
  }
  return 0;
}

int cmd_generate(const RunConfig& c) {
  CohortConfig cc;
  cc.n_clients = c.clients.value_or(cc.n_clients);
  require_usage(cc.n_clients >= 1, "--clients must be >= 1");
  if (c.group_boundaries) cc.group_boundaries = *c.group_boundaries;
  cc.rho_target = c.rho_target.value_or(cc.rho_target);
  cc.tx_min = c.tx_min.value_or(cc.tx_min);
  cc.tx_max = c.tx_max.value_or(std::max(cc.tx_max, cc.tx_min));
  cc.seed = c.seed.value_or(cc.seed);
  const fs::path out = c.out.value_or("cohort");

  const auto cohort = generate_cohort(cc);
  io::write_cohort(cohort, cc, out);
  std::printf("cohort written to %s (seed %llu, %zu attempts, %zu dropped)\n", out.string().c_str(),
              static_cast<unsigned long long>(cohort.seed), cohort.attempts, cohort.dropped);
  for (const auto& g : cohort.groups)
    std::printf("  %-18s %zu clients\n", g.label().c_str(), g.clients.size());
  return 0;
}

/// Fits the Kalman model on the first `frac` of the series (all of it when frac = 1).
KfModel fit_on_prefix(const TransactionSeries& s, double frac, const KfConfig& kc) {
  if (frac >= 1.0) return fit_kf(s.risk_scores, kc);
  return fit_kf(chronological_split(s, frac).train.risk_scores, kc);
}

int cmd_calibrate(const RunConfig& c) {
  require_usage(c.cohort.has_value(), "calibrate needs --cohort <dir>");
  const auto kc = kf_config(c);
  const double frac = c.train_frac.value_or(1.0);
  require_usage(frac > 0.0 && frac <= 1.0, "--train-frac must be in (0, 1]");
  const fs::path out = c.out.value_or("calibration");
  const auto cohort = io::read_cohort(*c.cohort);

  std::vector<const GeneratedClient*> clients;
  for (const auto& g : cohort.groups)
    for (const auto& cl : g.clients) clients.push_back(&cl);
  if (clients.empty()) throw DataError("cohort in " + *c.cohort + " has no clients");

  std::vector<std::string> failures(clients.size());
  std::mutex log_mutex;
  parallel_for(clients.size(), thread_count(c), [&](std::size_t i) {
    const auto& cl = *clients[i];
    const auto& id = cl.series.client_id;
    try {
      const auto m = fit_on_prefix(cl.series, frac, kc);
      json j = io::kf_model_json(m);
      j["client_id"] = id;
      j["true_params"] = io::to_json(cl.true_params);
      io::write_file_atomic(out / (id + ".json"), io::dump(j));
      if (c.traces.value_or(false)) {
        const auto y = log_no_fraud(cl.series.risk_scores);
        const auto tr = filter_series(y, m.calibration.params, m.calibration.w, kc.dt,
                                      kc.calibration.init, kc.horizon);
        io::write_file_atomic(out / (id + "_trace.csv"), io::filter_trace_csv(tr, y, 0.0, kc.dt));
      }
    } catch (const std::exception& e) {
      failures[i] = e.what();
      std::lock_guard lock(log_mutex);
      std::fprintf(stderr, "calibrate: client %s failed: %s\n", id.c_str(), e.what());
    }
  });

  json summary{{"n_clients", clients.size()}, {"failures", json::object()}};
  std::size_t n_failed = 0;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    if (failures[i].empty()) continue;
    summary["failures"][clients[i]->series.client_id] = failures[i];
    ++n_failed;
  }
  io::write_file_atomic(out / "summary.json", io::dump(summary));
  std::printf("calibrated %zu of %zu clients into %s\n", clients.size() - n_failed, clients.size(),
              out.string().c_str());
  return 0;
}

int cmd_predict(const RunConfig& c) {
  require_usage(c.client.has_value(), "predict needs --client <csv>");
  const auto kc = kf_config(c);
  const double frac = c.train_frac.value_or(0.8);
  require_usage(frac > 0.0 && frac < 1.0, "--train-frac must be in (0, 1)");
  const fs::path out = c.out.value_or("predict");
  const auto series = io::read_series_csv(*c.client);
  const auto split = chronological_split(series, frac);
  const auto m = fit_kf(split.train.risk_scores, kc);
  const auto probs = rolling_kf_predictions(m, split.test.risk_scores);

  const auto& id = series.client_id;
  std::string csv = split.test.labels ? "t,probability,label\n" : "t,probability\n";
  for (std::size_t i = 0; i < probs.size(); ++i) {
    csv += io::fmt(split.test.timestamps[i]) + "," + io::fmt(probs[i]);
    if (split.test.labels) csv += "," + std::to_string((*split.test.labels)[i]);
    csv += "\n";
  }
  io::write_file_atomic(out / (id + "_predictions.csv"), csv);
  io::write_file_atomic(out / (id + "_calibration.json"), io::dump(io::kf_model_json(m)));
  std::printf("%zu predictions written to %s\n", probs.size(), out.string().c_str());
  if (split.test.labels) {
    const auto& l = *split.test.labels;
    const auto pos = std::count(l.begin(), l.end(), 1);
    if (pos > 0 && static_cast<std::size_t>(pos) < l.size())
      std::printf("test AUC %.4f  AP %.4f\n", roc_auc(probs, l), average_precision(probs, l));
  }
  return 0;
}

int cmd_experiment(const RunConfig& c) {
  require_usage(c.cohort.has_value(), "experiment needs --cohort <dir>");
  ExperimentConfig ec;
  ec.kf = kf_config(c);
  ec.n_per_group = c.n_per_group.value_or(ec.n_per_group);
  require_usage(ec.n_per_group >= 1, "--n-per-group must be >= 1");
  ec.train_frac = c.train_frac.value_or(ec.train_frac);
  require_usage(ec.train_frac > 0.0 && ec.train_frac < 1.0, "--train-frac must be in (0, 1)");
  ec.seed = c.seed.value_or(ec.seed);
  ec.threads = c.threads.value_or(0);
  std::vector<Model> models(kAllModels.begin(), kAllModels.end());
  if (c.models) {
    require_usage(!c.models->empty(), "--models must name at least one model");
    models.clear();
    for (const auto& m : *c.models) models.push_back(parse_model(m));
  }
  const fs::path out = c.out.value_or("report");

  const auto cohort = io::read_cohort(*c.cohort);
  const auto rep = run_experiment(cohort, models, ec);
  io::write_report(rep, out);
  print_table(rep, io::Metric::auc);
  print_table(rep, io::Metric::ap);
  std::printf("report written to %s\n", out.string().c_str());
  return 0;
}

int cmd_report(const RunConfig& c) {
  require_usage(c.report.has_value(), "report needs --report <report.json or directory>");
  fs::path in = *c.report;
  if (fs::is_directory(in)) in /= "report.json";
  const auto rep = io::report_from_json(io::read_json(in));
  if (c.out) io::write_report(rep, *c.out);
  print_table(rep, io::Metric::auc);
  print_table(rep, io::Metric::ap);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CIR intensity filtering for fraud scoring on imbalanced transaction streams"};
  app.require_subcommand(1);
  app.fallthrough();

  RunConfig flags;
  std::string config_path;
  app.add_option("--seed", flags.seed, "root random seed");
  app.add_option("--dt", flags.dt, "time step between observations");
  app.add_option("--horizon", flags.horizon, "prediction horizon (defaults to dt)");
  app.add_option("--out", flags.out, "output directory");
  app.add_option("--config", config_path, "JSON RunConfig; flags override its values");

  auto* sim = app.add_subcommand("simulate", "simulate CIR intensity paths");
  sim->add_option("--n", flags.n_steps, "number of steps");
  sim->add_option("--lambda0", flags.lambda0);
  sim->add_option("--kappa", flags.kappa);
  sim->add_option("--theta", flags.theta);
  sim->add_option("--sigma", flags.sigma);
  sim->add_option("--scheme", flags.scheme, "exact | euler");

  auto* gen = app.add_subcommand("generate", "generate a synthetic cohort");
  gen->add_option("--clients", flags.clients, "clients per group");
  gen->add_option("--rho", flags.rho_target, "target score/label point-biserial correlation");
  gen->add_option("--tx-min", flags.tx_min);
  gen->add_option("--tx-max", flags.tx_max);
  gen->add_option("--boundaries", flags.group_boundaries, "fraud-proportion group upper bounds");

  auto add_kf_options = [&](CLI::App* sub) {
    sub->add_option("--init-variance", flags.init_variance, "v_{0|0} (default 10)");
    sub->add_option("--init-lambda", flags.init_lambda, "lambda_{0|0} (default 0)");
    sub->add_option("--train-frac", flags.train_frac);
    sub->add_option("--threads", flags.threads, "worker threads (0 = all cores)");
  };
  auto* cal = app.add_subcommand("calibrate", "calibrate every client of a cohort");
  cal->add_option("--cohort", flags.cohort, "cohort directory");
  cal->add_flag("--traces", flags.traces, "also write filter traces");
  add_kf_options(cal);

  auto* pred = app.add_subcommand("predict", "fit one client and predict its test transactions");
  pred->add_option("--client", flags.client, "client CSV (t,risk_score[,label])");
  add_kf_options(pred);

  auto* exp = app.add_subcommand("experiment", "run the model comparison on a cohort");
  exp->add_option("--cohort", flags.cohort, "cohort directory");
  exp->add_option("--models", flags.models, "subset of models (default all six)");
  exp->add_option("--n-per-group", flags.n_per_group, "clients sampled per group");
  add_kf_options(exp);

  auto* rep = app.add_subcommand("report", "render tables from a saved report");
  rep->add_option("--report", flags.report, "report.json or the directory holding it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) {
      json j;
      try {
        j = json::parse(io::read_file(config_path));
      } catch (const json::exception& e) {
        throw UsageError("config: " + std::string(e.what()));
      }
      cfg = cli::parse_run_config(j);
    }
    cfg = cli::merge(cfg, flags);

    if (*sim) return cmd_simulate(cfg);
    if (*gen) return cmd_generate(cfg);
    if (*cal) return cmd_calibrate(cfg);
    if (*pred) return cmd_predict(cfg);
    if (*exp) return cmd_experiment(cfg);
    if (*rep) return cmd_report(cfg);
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
