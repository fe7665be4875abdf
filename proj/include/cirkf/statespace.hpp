#pragma once

// Linear-Gaussian approximation of the CIR intensity observed through
// per-transaction log no-fraud probabilities:
//
//   state:        lambda_t = alpha + beta lambda_{t-1} + eps_t,  eps_t ~ N(0, eta_t^2)
//   measurement:  Y_t      = a + b lambda_t + mu_t,              mu_t  ~ N(0, w^2)
//
// with alpha, beta, eta^2 from the exact CIR conditional moments over one
// step and (a, b) = (A(h), -B(h)) from the affine no-fraud probability.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "cirkf/cir.hpp"
#include "cirkf/errors.hpp"
#include "cirkf/simplex.hpp"

namespace cirkf {

struct StateTransition {
  double alpha{0.0};
  double beta{0.0};
  double eta_sq_base{0.0};
  double eta_sq_slope{0.0};

  /// eta^2 evaluated at the previous filtered intensity, floored at zero.
  [[nodiscard]] double eta_sq(double lambda_prev) const noexcept {
    return eta_sq_base + eta_sq_slope * std::max(lambda_prev, 0.0);
  }
};

struct MeasurementModel {
  double a_obs{0.0};
  double b_obs{0.0};
  double w{0.0};
};

struct FilterState {
  double lambda_filtered{0.0};
  double variance{0.0};
  std::int64_t t_index{0};

  friend bool operator==(const FilterState&, const FilterState&) = default;
};

/// Default starting state: zero intensity with a large variance.
inline constexpr FilterState kDefaultInitialState{0.0, 10.0, 0};

struct Prediction {
  double lambda{0.0};
  double variance{0.0};
  std::int64_t t_index{0};
};

struct FilterStep {
  double predicted_lambda{0.0};
  double predicted_variance{0.0};
  double innovation{0.0};
  double innovation_variance{0.0};
  double gain{0.0};
  FilterState updated;
};

inline StateTransition make_state_transition(const CirParams& p, double dt) {
  p.validate();
  detail::require(std::isfinite(dt) && dt > 0.0, "make_state_transition: dt must be > 0");
  const double beta = std::exp(-p.kappa * dt);
  const double one_minus = -std::expm1(-p.kappa * dt);
  const double s2 = p.sigma * p.sigma;
  return StateTransition{
      p.theta * one_minus,
      beta,
      p.theta * s2 / (2.0 * p.kappa) * one_minus * one_minus,
      s2 / p.kappa * beta * one_minus,
  };
}

inline MeasurementModel make_measurement_model(const CirParams& p, double horizon, double w) {
  detail::require(horizon > 0.0, "make_measurement_model: horizon must be > 0 (b would vanish)");
  detail::require(w >= 0.0 && std::isfinite(w), "make_measurement_model: w must be >= 0");
  const auto c = affine_coefficients(p, horizon);
  return MeasurementModel{c.a_coef, -c.b_coef, w};
}

inline Prediction predict(const FilterState& s, const StateTransition& tr) {
  return Prediction{
      tr.alpha + tr.beta * s.lambda_filtered,
      tr.beta * tr.beta * s.variance + tr.eta_sq(s.lambda_filtered),
      s.t_index + 1,
  };
}

inline FilterStep update(const Prediction& pred, double y_obs, const MeasurementModel& m) {
  FilterStep st;
  st.predicted_lambda = pred.lambda;
  st.predicted_variance = pred.variance;
  st.innovation = y_obs - m.a_obs - m.b_obs * pred.lambda;
  st.innovation_variance = m.w * m.w + m.b_obs * m.b_obs * pred.variance;
  if (!(st.innovation_variance > 0.0)) {
    throw NumericalError("update: innovation variance is zero (w = 0 and v = 0)");
  }
  st.gain = m.b_obs * pred.variance / st.innovation_variance;
  st.updated.lambda_filtered = pred.lambda + st.gain * st.innovation;
  st.updated.variance = std::max((1.0 - st.gain * m.b_obs) * pred.variance, 0.0);
  st.updated.t_index = pred.t_index;
  return st;
}

/// Transition and measurement bundled for repeated filtering with one
/// parameter set.
struct CirStateSpace {
  StateTransition transition;
  MeasurementModel measurement;

  static CirStateSpace make(const CirParams& p, double w, double dt, double horizon) {
    return CirStateSpace{make_state_transition(p, dt), make_measurement_model(p, horizon, w)};
  }

  [[nodiscard]] FilterStep step(const FilterState& s, double y_obs) const {
    return update(predict(s, transition), y_obs, measurement);
  }
};

struct FilterResult {
  std::vector<FilterStep> steps;
  double log_likelihood{0.0};

  [[nodiscard]] FilterState final_state(const FilterState& init) const {
    return steps.empty() ? init : steps.back().updated;
  }
};

namespace detail {

inline void check_observations(std::span<const double> y) {
  if (y.empty()) throw DataError("filter: empty observation series");
  for (double v : y) {
    if (!std::isfinite(v)) throw DataError("filter: non-finite observation");
  }
}

/// Prediction-error log-likelihood only; no trace is kept.
inline double log_likelihood_only(std::span<const double> y, const CirStateSpace& model,
                                  FilterState s) {
  double ll = 0.0;
  for (double obs : y) {
    const auto st = model.step(s, obs);
    ll -= 0.5 * (std::log(st.innovation_variance) +
                 st.innovation * st.innovation / st.innovation_variance);
    s = st.updated;
  }
  return ll;
}

}  // namespace detail

/// Runs the filter over `y` and accumulates
///   l = -1/2 sum log psi_t - 1/2 sum e_t^2 / psi_t.
/// `horizon` for the measurement coefficients defaults to `dt`.
inline FilterResult filter_series(std::span<const double> y, const CirParams& p, double w,
                                  double dt, const FilterState& init = kDefaultInitialState,
                                  std::optional<double> horizon = std::nullopt) {
  detail::check_observations(y);
  const auto model = CirStateSpace::make(p, w, dt, horizon.value_or(dt));
  FilterResult out;
  out.steps.reserve(y.size());
  FilterState s = init;
  for (double obs : y) {
    auto st = model.step(s, obs);
    out.log_likelihood -= 0.5 * (std::log(st.innovation_variance) +
                                 st.innovation * st.innovation / st.innovation_variance);
    s = st.updated;
    out.steps.push_back(st);
  }
  return out;
}

/// Log no-fraud probability from a risk score in [0, 1).
inline double log_no_fraud(double risk_score) {
  constexpr double kMaxScore = 1.0 - 1e-9;
  return std::log1p(-std::clamp(risk_score, 0.0, kMaxScore));
}

inline std::vector<double> log_no_fraud(std::span<const double> risk_scores) {
  std::vector<double> y(risk_scores.size());
  std::transform(risk_scores.begin(), risk_scores.end(), y.begin(),
                 [](double r) { return log_no_fraud(r); });
  return y;
}

/// Search box for calibration, relative to the step and to the data scale
/// theta0 = -mean(y) / horizon, w0 = sd(y) / 2. It keeps the simplex out of
/// the flat random-walk ridge (kappa -> 0, theta -> inf) where the affine
/// coefficients overflow.
struct CalibrationBounds {
  double kappa_dt_min{1e-4};
  double kappa_dt_max{1e2};
  double theta_rel_min{1e-4};
  double theta_rel_max{1e4};
  double inv_shape_min{1e-6};  ///< sigma^2 / (2 kappa theta)
  double inv_shape_max{1e3};
  double w_rel_min{1e-8};
  double w_rel_max{1e4};
};

struct CalibrationConfig {
  FilterState init{kDefaultInitialState};
  std::optional<double> horizon;  ///< defaults to dt
  std::optional<double> fixed_w;  ///< hold w at this value instead of estimating it
  std::size_t n_starts{5};
  std::size_t min_observations{20};
  SimplexOptions simplex{};
  CalibrationBounds bounds{};
  bool polish{true};  ///< restart the simplex once from the best start
};

struct CalibrationResult {
  CirParams params;
  double w{0.0};
  double log_likelihood{-std::numeric_limits<double>::infinity()};
  bool converged{false};
  std::size_t iterations{0};
  std::size_t evaluations{0};
  std::size_t starts_converged{0};
  std::size_t n_obs{0};
};

/// Quasi-maximum-likelihood estimate of (kappa, theta, sigma, w). The
/// optimizer works on log-parameters from a fixed set of data-scaled starts,
/// so the result is deterministic for a given series and config.
inline CalibrationResult calibrate(std::span<const double> y, double dt,
                                   const CalibrationConfig& cfg = {}) {
  detail::check_observations(y);
  if (y.size() < cfg.min_observations) {
    throw DataError("calibrate: at least " + std::to_string(cfg.min_observations) +
                    " observations required");
  }
  detail::require(dt > 0.0, "calibrate: dt must be > 0");
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  if (*lo == *hi) throw DataError("calibrate: constant observation series");

  const double horizon = cfg.horizon.value_or(dt);
  const double n = static_cast<double>(y.size());
  const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double var_y = 0.0;
  for (double v : y) var_y += (v - mean_y) * (v - mean_y);
  var_y /= n - 1.0;

  const double theta0 = std::max(-mean_y / horizon, 1e-8);
  const double w0 = std::max(0.5 * std::sqrt(var_y), 1e-8);
  const bool estimate_w = !cfg.fixed_w.has_value();

  auto unpack = [&](const std::vector<double>& x, CirParams& p, double& w) {
    p = CirParams{std::exp(x[0]), std::exp(x[1]), std::exp(x[2])};
    w = estimate_w ? std::exp(x[3]) : *cfg.fixed_w;
  };
  auto objective = [&](const std::vector<double>& x) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    for (double v : x)
      if (!std::isfinite(v)) return kInf;
    CirParams p;
    double w = 0.0;
    unpack(x, p, w);
    const auto& b = cfg.bounds;
    const double inv_shape = p.sigma * p.sigma / (2.0 * p.kappa * p.theta);
    if (!(p.kappa * dt >= b.kappa_dt_min && p.kappa * dt <= b.kappa_dt_max) ||
        !(p.theta >= b.theta_rel_min * theta0 && p.theta <= b.theta_rel_max * theta0) ||
        !(inv_shape >= b.inv_shape_min && inv_shape <= b.inv_shape_max) ||
        (estimate_w && !(w >= b.w_rel_min * w0 && w <= b.w_rel_max * w0))) {
      return kInf;
    }
    try {
      const auto model = CirStateSpace::make(p, w, dt, horizon);
      return -detail::log_likelihood_only(y, model, cfg.init);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  // (kappa * dt, theta multiplier, stationary gamma shape 2 kappa theta / sigma^2, w multiplier)
  static constexpr std::array<std::array<double, 4>, 5> kStarts{{
      {0.5, 1.0, 2.0, 1.0},
      {0.1, 1.0, 1.0, 1.0},
      {1.0, 1.0, 4.0, 0.5},
      {0.05, 2.0, 0.5, 1.0},
      {2.0, 0.5, 1.0, 2.0},
  }};

  CalibrationResult best;
  std::vector<double> best_x;
  const std::size_t n_starts = std::clamp<std::size_t>(cfg.n_starts, 1, kStarts.size());
  for (std::size_t s = 0; s < n_starts; ++s) {
    const auto& st = kStarts[s];
    const double kappa = st[0] / dt;
    const double theta = st[1] * theta0;
    const double sigma = std::sqrt(2.0 * kappa * theta / st[2]);
    std::vector<double> x0{std::log(kappa), std::log(theta), std::log(sigma)};
    if (estimate_w) x0.push_back(std::log(st[3] * w0));

    const auto r = nelder_mead(objective, x0, cfg.simplex);
    best.iterations += r.iterations;
    best.evaluations += r.evaluations;
    if (r.converged) ++best.starts_converged;
    if (-r.value > best.log_likelihood || best_x.empty()) {
      best.log_likelihood = -r.value;
      best.converged = r.converged;
      best_x = r.x;
    }
  }

  if (cfg.polish && std::isfinite(best.log_likelihood)) {
    SimplexOptions o = cfg.simplex;
    o.initial_step = 0.1;
    const auto r = nelder_mead(objective, best_x, o);
    best.iterations += r.iterations;
    best.evaluations += r.evaluations;
    if (-r.value >= best.log_likelihood) {
      best.log_likelihood = -r.value;
      best_x = r.x;
    }
    best.converged = r.converged;
  }

  if (!std::isfinite(best.log_likelihood)) {
    throw NumericalError("calibrate: likelihood is not finite at any start");
  }
  unpack(best_x, best.params, best.w);
  best.n_obs = y.size();
  return best;
}

}  // namespace cirkf
