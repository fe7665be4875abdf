#pragma once

// Synthetic transaction cohorts. Each client gets a CIR intensity path on a
// per-transaction clock; labels are Bernoulli(1 - exp(-lambda_i dt)) draws and
// risk scores are noisy readings of the log no-fraud probability,
//
//   log(1 - r_i) = min(0, -(base_rel theta + lambda_i + m label_i) dt + noise_rel theta eps_i),
//
// where the label jump m is tuned on a pilot sample so the point-biserial
// correlation between scores and labels hits the target. A zero target
// removes all signal and leaves pure noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "cirkf/cir.hpp"
#include "cirkf/errors.hpp"
#include "cirkf/metrics.hpp"
#include "cirkf/random.hpp"

namespace cirkf {

struct TransactionSeries {
  std::string client_id;
  std::vector<double> timestamps;
  std::vector<double> risk_scores;
  std::optional<std::vector<int>> labels;

  [[nodiscard]] std::size_t size() const noexcept { return timestamps.size(); }

  [[nodiscard]] std::size_t fraud_count() const {
    if (!labels) return 0;
    return static_cast<std::size_t>(std::count(labels->begin(), labels->end(), 1));
  }

  [[nodiscard]] double fraud_proportion() const {
    return size() == 0 ? 0.0 : static_cast<double>(fraud_count()) / static_cast<double>(size());
  }

  void validate() const {
    if (risk_scores.size() != timestamps.size() || (labels && labels->size() != timestamps.size()))
      throw DataError("TransactionSeries " + client_id + ": column lengths differ");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
      if (!(timestamps[i] > timestamps[i - 1]))
        throw DataError("TransactionSeries " + client_id + ": timestamps not strictly increasing");
    for (double r : risk_scores)
      if (!(r >= 0.0 && r < 1.0))
        throw DataError("TransactionSeries " + client_id + ": risk score outside [0, 1)");
    if (labels)
      for (int l : *labels)
        if (l != 0 && l != 1) throw DataError("TransactionSeries " + client_id + ": bad label");
  }
};

struct ScoreModel {
  double base_rel{3.0};   ///< baseline score level relative to theta
  double noise_rel{0.5};  ///< noise sd on log(1 - r) relative to theta
  double max_jump{50.0};
  std::size_t pilot_length{20000};
};

struct GeneratedClient {
  TransactionSeries series;
  CirParams true_params;  ///< after scaling to the target proportion
  std::vector<double> intensity;  ///< latent lambda_i behind each transaction
  double target_prop{0.0};
  double label_jump{0.0};  ///< m; 0 when no signal was requested
  std::uint64_t seed{0};
};

namespace detail {

/// CIR with the same stationary shape 2 kappa theta / sigma^2 as `p`, rescaled so
/// the stationary expectation of 1 - exp(-lambda dt) equals `target_prop`.
inline CirParams scale_to_proportion(const CirParams& p, double target_prop, double dt) {
  const double shape = 2.0 * p.kappa * p.theta / (p.sigma * p.sigma);
  // E[exp(-lambda dt)] = (1 + theta dt / shape)^(-shape) under the stationary gamma law.
  const double theta = shape * std::expm1(-std::log1p(-target_prop) / shape) / dt;
  const double factor = theta / p.theta;
  return CirParams{p.kappa, theta, p.sigma * std::sqrt(factor)};
}

struct LatentDraws {
  std::vector<double> lambda;
  std::vector<int> labels;
};

inline LatentDraws draw_latent(const CirParams& p, std::size_t n, double dt, Rng& rng) {
  const double shape = 2.0 * p.kappa * p.theta / (p.sigma * p.sigma);
  const CirTransition tr(p, dt);
  LatentDraws d;
  d.lambda.reserve(n);
  d.labels.reserve(n);
  double lambda = gamma_variate(shape, rng) * p.theta / shape;
  for (std::size_t i = 0; i < n; ++i) {
    lambda = tr.step(lambda, rng);
    d.lambda.push_back(lambda);
    d.labels.push_back(uniform01(rng) < -std::expm1(-lambda * dt) ? 1 : 0);
  }
  return d;
}

inline std::vector<double> make_scores(const LatentDraws& d, const std::vector<double>& noise,
                                       double theta, double jump, bool with_signal, double dt,
                                       const ScoreModel& sm) {
  constexpr double kMaxScore = 1.0 - 1e-9;
  std::vector<double> r(d.lambda.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double level = sm.base_rel * theta;
    const double signal = (with_signal ? level + d.lambda[i] + jump * d.labels[i] : level + theta) * dt;
    const double y = std::min(0.0, -signal + sm.noise_rel * theta * noise[i]);
    r[i] = std::min(-std::expm1(y), kMaxScore);
  }
  return r;
}

/// Smallest label jump whose pilot correlation reaches `rho_target`
/// (geometric scan, then bisection). Common random numbers keep the map
/// deterministic in the jump.
inline double calibrate_jump(const CirParams& p, double dt, double rho_target,
                             const ScoreModel& sm, Rng& rng) {
  const auto pilot = draw_latent(p, sm.pilot_length, dt, rng);
  if (std::count(pilot.labels.begin(), pilot.labels.end(), 1) == 0)
    throw DataError("generate_client: pilot sample has no fraud events");
  std::vector<double> noise(sm.pilot_length);
  for (double& e : noise) e = standard_normal(rng);
  auto rho_at = [&](double jump) {
    return point_biserial(make_scores(pilot, noise, p.theta, jump, true, dt, sm), pilot.labels);
  };

  double lo = 0.0;
  double hi = -1.0;
  for (double jump = p.theta; jump <= sm.max_jump; jump *= 1.5) {
    if (rho_at(jump) >= rho_target) {
      hi = jump;
      break;
    }
    lo = jump;
  }
  if (hi < 0.0) {
    throw DataError("generate_client: correlation target unreachable for this fraud proportion");
  }
  for (int it = 0; it < 40 && hi - lo > 1e-4 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rho_at(mid) >= rho_target ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace detail

/// One synthetic client on a unit per-transaction clock. `params` fixes the
/// mean-reversion speed and the stationary shape (burstiness) of the
/// intensity; its level is rescaled to `target_prop`.
inline GeneratedClient generate_client(const CirParams& params, std::size_t n_tx, double target_prop,
                                       double rho_target, std::uint64_t seed,
                                       const ScoreModel& sm = {}, std::string client_id = "client") {
  params.validate();
  detail::require(n_tx >= 50, "generate_client: n_tx must be >= 50");
  detail::require(target_prop > 0.0 && target_prop < 0.5, "generate_client: target_prop must be in (0, 0.5)");
  detail::require(rho_target >= 0.0 && rho_target <= 0.95, "generate_client: rho_target must be in [0, 0.95]");
  constexpr double dt = 1.0;

  GeneratedClient out;
  out.seed = seed;
  out.target_prop = target_prop;
  out.true_params = detail::scale_to_proportion(params, target_prop, dt);

  const bool with_signal = rho_target > 0.0;
  if (with_signal) {
    Rng pilot_rng(child_seed(seed, 1));
    out.label_jump = detail::calibrate_jump(out.true_params, dt, rho_target, sm, pilot_rng);
  }

  Rng rng(child_seed(seed, 0));
  const auto latent = detail::draw_latent(out.true_params, n_tx, dt, rng);
  std::vector<double> noise(n_tx);
  for (double& e : noise) e = standard_normal(rng);

  out.series.client_id = std::move(client_id);
  out.series.timestamps.resize(n_tx);
  for (std::size_t i = 0; i < n_tx; ++i) out.series.timestamps[i] = static_cast<double>(i) * dt;
  out.series.risk_scores = detail::make_scores(latent, noise, out.true_params.theta, out.label_jump,
                                               with_signal, dt, sm);
  out.series.labels = latent.labels;
  out.intensity = latent.lambda;
  return out;
}

struct CohortConfig {
  std::size_t n_clients{200};  ///< per group
  std::vector<double> group_boundaries{0.004, 0.006, 0.01, 0.05, 0.08, 0.1, 0.15};
  std::size_t tx_min{1000};
  std::size_t tx_max{3000};
  double kappa_min{0.005};  ///< per-transaction mean reversion; low values = persistent intensity
  double kappa_max{0.03};
  double shape_min{0.03};  ///< stationary shape 2 kappa theta / sigma^2; low values = bursty fraud
  double shape_max{0.1};
  double rho_target{0.8};
  std::uint64_t seed{20240601};
  std::size_t max_attempts_per_client{60};
  ScoreModel score_model{};

  void validate() const {
    detail::require(n_clients >= 1, "CohortConfig: n_clients must be >= 1");
    detail::require(!group_boundaries.empty(), "CohortConfig: no group boundaries");
    double prev = 0.0;
    for (double b : group_boundaries) {
      detail::require(b > prev && b <= 0.15, "CohortConfig: boundaries must increase within (0, 0.15]");
      prev = b;
    }
    detail::require(tx_min >= 50 && tx_max >= tx_min, "CohortConfig: bad transaction range");
    detail::require(kappa_min > 0.0 && kappa_max >= kappa_min, "CohortConfig: bad kappa range");
    detail::require(shape_min > 0.0 && shape_max >= shape_min, "CohortConfig: bad shape range");
    detail::require(rho_target >= 0.0 && rho_target <= 0.95, "CohortConfig: rho_target out of range");
  }
};

struct CohortGroup {
  double lower{0.0};
  double upper{0.0};
  std::vector<GeneratedClient> clients;

  [[nodiscard]] std::string label() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g<P<=%g", lower, upper);
    return buf;
  }
};

struct Cohort {
  std::vector<CohortGroup> groups;
  std::uint64_t seed{0};
  std::size_t attempts{0};
  std::size_t dropped{0};
};

/// Group index by realized proportion, or -1 outside every bin.
inline int group_of(double proportion, const std::vector<double>& bounds) {
  double lower = 0.0;
  for (std::size_t g = 0; g < bounds.size(); ++g) {
    if (proportion > lower && proportion <= bounds[g]) return static_cast<int>(g);
    lower = bounds[g];
  }
  return -1;
}

/// Clients are generated with targets drawn inside a group that still needs
/// members and then filed by their realized proportion. Clients without fraud
/// events, with only fraud events, or outside all bins are dropped.
inline Cohort generate_cohort(const CohortConfig& cfg) {
  cfg.validate();
  const std::size_t n_groups = cfg.group_boundaries.size();
  Cohort cohort;
  cohort.seed = cfg.seed;
  double lower = 0.0;
  for (double b : cfg.group_boundaries) {
    cohort.groups.push_back(CohortGroup{lower, b, {}});
    lower = b;
  }

  const std::size_t max_attempts = cfg.max_attempts_per_client * cfg.n_clients * n_groups;
  std::size_t next_group = 0;
  while (cohort.attempts < max_attempts) {
    std::size_t target_group = n_groups;
    for (std::size_t k = 0; k < n_groups; ++k) {
      const std::size_t g = (next_group + k) % n_groups;
      if (cohort.groups[g].clients.size() < cfg.n_clients) {
        target_group = g;
        break;
      }
    }
    if (target_group == n_groups) break;
    next_group = target_group + 1;

    const std::uint64_t seed = child_seed(cfg.seed, cohort.attempts);
    ++cohort.attempts;
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> tx_dist(cfg.tx_min, cfg.tx_max);
    const std::size_t n_tx = tx_dist(rng);
    const auto& grp = cohort.groups[target_group];
    const double lo = std::max(grp.lower, 1.5 / static_cast<double>(n_tx));
    if (lo >= grp.upper) {
      ++cohort.dropped;
      continue;
    }
    const double target = lo + (grp.upper - lo) * uniform01(rng);
    const double kappa = cfg.kappa_min + (cfg.kappa_max - cfg.kappa_min) * uniform01(rng);
    const double shape = cfg.shape_min + (cfg.shape_max - cfg.shape_min) * uniform01(rng);
    const double theta = target;
    const CirParams p{kappa, theta, std::sqrt(2.0 * kappa * theta / shape)};

    GeneratedClient client;
    try {
      client = generate_client(p, n_tx, target, cfg.rho_target, child_seed(seed, 7), cfg.score_model);
    } catch (const DataError&) {
      ++cohort.dropped;
      continue;
    }
    const std::size_t frauds = client.series.fraud_count();
    const int g = group_of(client.series.fraud_proportion(), cfg.group_boundaries);
    if (frauds == 0 || frauds == n_tx || g < 0 ||
        cohort.groups[static_cast<std::size_t>(g)].clients.size() >= cfg.n_clients) {
      ++cohort.dropped;
      continue;
    }
    char id[32];
    std::snprintf(id, sizeof id, "c%06zu", cohort.attempts - 1);
    client.series.client_id = id;
    cohort.groups[static_cast<std::size_t>(g)].clients.push_back(std::move(client));
  }

  for (const auto& g : cohort.groups) {
    if (g.clients.empty()) throw DataError("generate_cohort: group " + g.label() + " is empty");
  }
  return cohort;
}

}  // namespace cirkf
