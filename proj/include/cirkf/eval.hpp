#pragma once

// Evaluation protocol: chronological train/test split, the rolling
// one-step-ahead Kalman prediction loop, the six scoring models and the
// per-group median aggregation of ROC-AUC and average precision.

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cirkf/baselines.hpp"
#include "cirkf/cir.hpp"
#include "cirkf/errors.hpp"
#include "cirkf/metrics.hpp"
#include "cirkf/random.hpp"
#include "cirkf/shift.hpp"
#include "cirkf/statespace.hpp"
#include "cirkf/synth.hpp"

namespace cirkf {

enum class Model { homo_poisson, linear_poisson, quadratic_poisson, naive, score, kf };

inline constexpr std::array kAllModels{Model::homo_poisson, Model::linear_poisson,
                                       Model::quadratic_poisson, Model::naive,
                                       Model::score, Model::kf};

inline std::string_view model_name(Model m) {
  switch (m) {
    case Model::homo_poisson: return "HomoPoisson";
    case Model::linear_poisson: return "LinearPoisson";
    case Model::quadratic_poisson: return "QuadraticPoisson";
    case Model::naive: return "NaiveApproach";
    case Model::score: return "ScoreApproach";
    case Model::kf: return "KFApproach";
  }
  return "?";
}

/// Accepts the display names and the short forms homo, linear, quadratic,
/// naive, score, kf (case-insensitive).
inline Model parse_model(std::string_view s) {
  std::string k(s);
  std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
  for (Model m : kAllModels) {
    std::string name(model_name(m));
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (k == name) return m;
  }
  if (k == "homo" || k == "homogeneous") return Model::homo_poisson;
  if (k == "linear" || k == "linearstatic") return Model::linear_poisson;
  if (k == "quadratic") return Model::quadratic_poisson;
  if (k == "naive") return Model::naive;
  if (k == "score") return Model::score;
  if (k == "kf" || k == "kalman") return Model::kf;
  throw DomainError("unknown model '" + std::string(s) + "'");
}

struct SplitSeries {
  TransactionSeries train;
  TransactionSeries test;
};

inline SplitSeries chronological_split(const TransactionSeries& s, double frac = 0.8) {
  if (s.size() < 5) throw DataError("chronological_split: need at least 5 transactions");
  detail::require(frac > 0.0 && frac <= 1.0, "chronological_split: frac must be in (0, 1]");
  const auto cut = static_cast<std::size_t>(std::floor(frac * static_cast<double>(s.size())));
  if (cut == 0 || cut >= s.size()) throw DataError("chronological_split: empty train or test set");

  auto slice = [&](std::size_t from, std::size_t to) {
    TransactionSeries part;
    part.client_id = s.client_id;
    part.timestamps.assign(s.timestamps.begin() + from, s.timestamps.begin() + to);
    part.risk_scores.assign(s.risk_scores.begin() + from, s.risk_scores.begin() + to);
    if (s.labels) part.labels.emplace(s.labels->begin() + from, s.labels->begin() + to);
    return part;
  };
  return SplitSeries{slice(0, cut), slice(cut, s.size())};
}

struct KfConfig {
  double dt{1.0};
  double horizon{1.0};
  CalibrationConfig calibration{};
};

/// Everything needed to continue filtering and predicting past the training
/// window.
struct KfModel {
  CalibrationResult calibration;
  CorrectedParams correction;
  AffineCoefficients prediction;  ///< coefficients used for the fraud probability
  CirStateSpace filter;
  FilterState end_of_train;
  std::vector<double> train_filtered;
};

/// Calibrates on the training risk scores only; labels are never read.
inline KfModel fit_kf(std::span<const double> train_scores, const KfConfig& cfg = {}) {
  const auto y = log_no_fraud(train_scores);
  KfModel m;
  m.calibration = calibrate(y, cfg.dt, [&] {
    auto c = cfg.calibration;
    c.horizon = cfg.horizon;
    return c;
  }());
  const auto trace = filter_series(y, m.calibration.params, m.calibration.w, cfg.dt,
                                   cfg.calibration.init, cfg.horizon);
  m.train_filtered.reserve(trace.steps.size());
  for (const auto& st : trace.steps) m.train_filtered.push_back(st.updated.lambda_filtered);
  m.end_of_train = trace.final_state(cfg.calibration.init);
  m.correction = corrected_prediction_params(m.calibration.params, m.train_filtered, cfg.dt);
  m.prediction = affine_coefficients(m.correction.params, cfg.horizon);
  m.filter = CirStateSpace::make(m.calibration.params, m.calibration.w, cfg.dt, cfg.horizon);
  return m;
}

/// Streaming form of the prediction loop: ask for the probability of fraud
/// on the next transaction, then feed that transaction's risk score.
class KfPredictor {
 public:
  explicit KfPredictor(const KfModel& model) : model_(&model), state_(model.end_of_train) {}

  [[nodiscard]] double next_probability() const {
    return fraud_probability(model_->prediction,
                             state_.lambda_filtered + model_->correction.alpha_shift);
  }

  void observe(double risk_score) {
    state_ = model_->filter.step(state_, log_no_fraud(risk_score)).updated;
  }

  [[nodiscard]] const FilterState& state() const noexcept { return state_; }

 private:
  const KfModel* model_;
  FilterState state_;
};

inline std::vector<double> rolling_kf_predictions(const KfModel& model,
                                                  std::span<const double> test_scores) {
  KfPredictor pred(model);
  std::vector<double> out;
  out.reserve(test_scores.size());
  for (double r : test_scores) {
    out.push_back(pred.next_probability());
    pred.observe(r);
  }
  return out;
}

struct ExperimentConfig {
  std::size_t n_per_group{200};
  double train_frac{0.8};
  KfConfig kf{};
  SimplexOptions poisson_simplex{};
  std::uint64_t seed{1391};
  std::size_t threads{0};  ///< 0 = hardware concurrency

  [[nodiscard]] std::string describe() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "n=%zu;frac=%.17g;dt=%.17g;h=%.17g;v0=%.17g;l0=%.17g;starts=%zu;tol=%.17g;"
                  "iters=%zu;seed=%llu",
                  n_per_group, train_frac, kf.dt, kf.horizon, kf.calibration.init.variance,
                  kf.calibration.init.lambda_filtered, kf.calibration.n_starts,
                  kf.calibration.simplex.tolerance, kf.calibration.simplex.max_iterations,
                  static_cast<unsigned long long>(seed));
    return buf;
  }
};

inline std::vector<double> event_indices(const TransactionSeries& train) {
  std::vector<double> ev;
  if (!train.labels) throw DataError("Poisson baselines need training labels");
  for (std::size_t i = 0; i < train.labels->size(); ++i)
    if ((*train.labels)[i] == 1) ev.push_back(static_cast<double>(i));
  return ev;
}

/// Test-set fraud probabilities for one model. Event times and prediction
/// windows use transaction indices: transaction i occupies [i, i + 1).
inline std::vector<double> score_test(Model model, const SplitSeries& split,
                                      const ExperimentConfig& cfg) {
  const auto& train = split.train;
  const auto& test = split.test;
  const double span = static_cast<double>(train.size());
  const double h = cfg.kf.horizon;
  std::vector<double> out(test.size());
  auto poly_scores = [&](const PolyIntensity& f) {
    for (std::size_t j = 0; j < test.size(); ++j)
      out[j] = poisson_predict(f, span + static_cast<double>(j), h);
  };

  switch (model) {
    case Model::homo_poisson:
      poly_scores(PolyIntensity{{fit_homogeneous(event_indices(train), span)}});
      break;
    case Model::linear_poisson:
      poly_scores(fit_poly_intensity(event_indices(train), span, 1, cfg.poisson_simplex).intensity);
      break;
    case Model::quadratic_poisson:
      poly_scores(fit_poly_intensity(event_indices(train), span, 2, cfg.poisson_simplex).intensity);
      break;
    case Model::naive: {
      if (!train.labels) throw DataError("NaiveApproach needs training labels");
      std::fill(out.begin(), out.end(), naive_predict(*train.labels));
      break;
    }
    case Model::score:
      out = score_predict(test.risk_scores, train.risk_scores.back());
      break;
    case Model::kf: {
      const auto fitted = fit_kf(train.risk_scores, cfg.kf);
      out = rolling_kf_predictions(fitted, test.risk_scores);
      break;
    }
  }
  return out;
}

struct MetricPair {
  std::optional<double> auc;
  std::optional<double> ap;
};

struct ClientEvaluation {
  std::string client_id;
  std::size_t group{0};
  double realized_prop{0.0};
  std::size_t n_test{0};
  std::size_t n_test_frauds{0};
  std::vector<MetricPair> metrics;  ///< parallel to ExperimentReport::models
  std::vector<std::string> errors;  ///< empty string = model ran
};

struct ModelSummary {
  double median_auc{std::nan("")};
  double median_ap{std::nan("")};
  std::size_t n_auc{0};
  std::size_t n_ap{0};
  std::size_t n_failed{0};
};

struct GroupSummary {
  std::string label;
  double lower{0.0};
  double upper{0.0};
  std::size_t n_clients{0};
  std::size_t n_single_class{0};
  std::vector<ModelSummary> models;
};

struct ExperimentReport {
  std::vector<Model> models;
  std::vector<GroupSummary> groups;
  std::vector<ClientEvaluation> clients;
  std::uint64_t seed{0};
  std::uint64_t cohort_seed{0};
  std::string config_hash;
};

inline std::string fnv1a_hex(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline ClientEvaluation evaluate_client(const TransactionSeries& series, std::size_t group,
                                        const std::vector<Model>& models,
                                        const ExperimentConfig& cfg) {
  ClientEvaluation ev;
  ev.client_id = series.client_id;
  ev.group = group;
  ev.realized_prop = series.fraud_proportion();
  ev.metrics.resize(models.size());
  ev.errors.resize(models.size());

  SplitSeries split;
  try {
    split = chronological_split(series, cfg.train_frac);
  } catch (const std::exception& e) {
    std::fill(ev.errors.begin(), ev.errors.end(), e.what());
    return ev;
  }
  if (!split.test.labels) {
    std::fill(ev.errors.begin(), ev.errors.end(), "missing labels");
    return ev;
  }
  const auto& labels = *split.test.labels;
  ev.n_test = labels.size();
  ev.n_test_frauds = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const bool two_class = ev.n_test_frauds > 0 && ev.n_test_frauds < ev.n_test;

  for (std::size_t k = 0; k < models.size(); ++k) {
    try {
      const auto probs = score_test(models[k], split, cfg);
      if (two_class) ev.metrics[k].auc = roc_auc(probs, labels);
      if (ev.n_test_frauds > 0) ev.metrics[k].ap = average_precision(probs, labels);
    } catch (const std::exception& e) {
      ev.errors[k] = e.what();
    }
  }
  return ev;
}

/// Per group: pick up to n_per_group clients at random (seeded), fit every
/// model on the first train_frac of each client's transactions, score the
/// rest and summarize with medians. Clients with a single-class test split
/// are left out of the AUC median (and of the AP median when it has no
/// positives).
inline ExperimentReport run_experiment(const Cohort& cohort, const std::vector<Model>& models,
                                       const ExperimentConfig& cfg) {
  if (models.empty()) throw DomainError("run_experiment: no models requested");
  ExperimentReport rep;
  rep.models = models;
  rep.seed = cfg.seed;
  rep.cohort_seed = cohort.seed;
  std::string desc = cfg.describe() + ";models=";
  for (Model m : models) desc += std::string(model_name(m)) + ",";
  rep.config_hash = fnv1a_hex(desc);

  struct Task {
    const TransactionSeries* series;
    std::size_t group;
  };
  std::vector<Task> tasks;
  for (std::size_t g = 0; g < cohort.groups.size(); ++g) {
    const auto& clients = cohort.groups[g].clients;
    std::vector<std::size_t> pick(clients.size());
    for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
    if (pick.size() > cfg.n_per_group) {
      Rng rng(child_seed(cfg.seed, g));
      std::shuffle(pick.begin(), pick.end(), rng);
      pick.resize(cfg.n_per_group);
      std::sort(pick.begin(), pick.end());
    }
    for (std::size_t i : pick) tasks.push_back(Task{&clients[i].series, g});
  }

  rep.clients.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++)
      rep.clients[i] = evaluate_client(*tasks[i].series, tasks[i].group, models, cfg);
  };
  const std::size_t n_threads =
      std::max<std::size_t>(1, cfg.threads ? cfg.threads : std::thread::hardware_concurrency());
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  for (std::size_t g = 0; g < cohort.groups.size(); ++g) {
    GroupSummary gs;
    gs.label = cohort.groups[g].label();
    gs.lower = cohort.groups[g].lower;
    gs.upper = cohort.groups[g].upper;
    gs.models.resize(models.size());
    std::vector<std::vector<double>> aucs(models.size()), aps(models.size());
    for (const auto& ev : rep.clients) {
      if (ev.group != g) continue;
      ++gs.n_clients;
      if (ev.n_test_frauds == 0 || ev.n_test_frauds == ev.n_test) ++gs.n_single_class;
      for (std::size_t k = 0; k < models.size(); ++k) {
        if (!ev.errors[k].empty()) ++gs.models[k].n_failed;
        if (ev.metrics[k].auc) aucs[k].push_back(*ev.metrics[k].auc);
        if (ev.metrics[k].ap) aps[k].push_back(*ev.metrics[k].ap);
      }
    }
    if (gs.n_clients == gs.n_single_class) {
      throw DataError("run_experiment: group " + gs.label + " has no evaluable clients");
    }
    for (std::size_t k = 0; k < models.size(); ++k) {
      gs.models[k].n_auc = aucs[k].size();
      gs.models[k].n_ap = aps[k].size();
      gs.models[k].median_auc = median(aucs[k]);
      gs.models[k].median_ap = median(aps[k]);
    }
    rep.groups.push_back(std::move(gs));
  }
  return rep;
}

}  // namespace cirkf
