#pragma once

// Intensity-only comparison models: homogeneous Poisson, linear and
// quadratic inhomogeneous Poisson (fitted by maximum likelihood), the naive
// training-proportion predictor and the lag-one risk-score predictor.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "cirkf/errors.hpp"
#include "cirkf/simplex.hpp"

namespace cirkf {

inline constexpr double kIntensityFloor = 1e-12;

/// lambda(t) = c0 + c1 t + c2 t^2 (trailing coefficients optional).
struct PolyIntensity {
  std::vector<double> coeffs;

  [[nodiscard]] int degree() const noexcept { return static_cast<int>(coeffs.size()) - 1; }

  [[nodiscard]] double rate(double t) const noexcept {
    double v = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) v = v * t + *it;
    return v;
  }

  /// Closed-form integral of the polynomial over [t0, t1].
  [[nodiscard]] double integral(double t0, double t1) const noexcept {
    double v = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
      const double p = static_cast<double>(k + 1);
      v += coeffs[k] * (std::pow(t1, p) - std::pow(t0, p)) / p;
    }
    return v;
  }
};

struct PoissonFit {
  PolyIntensity intensity;
  double log_likelihood{0.0};
  bool fallback{false};  ///< no events in the training window: floor rate
  bool converged{true};
};

inline double fit_homogeneous(std::span<const double> event_times, double span) {
  detail::require(span > 0.0 && std::isfinite(span), "fit_homogeneous: span must be > 0");
  return static_cast<double>(event_times.size()) / span;
}

/// Sum log lambda(t_i) - int_0^span lambda. Returns -inf when lambda drops
/// below the floor anywhere on [0, span].
inline double poisson_log_likelihood(const PolyIntensity& f, std::span<const double> event_times,
                                     double span) {
  const auto& c = f.coeffs;
  auto below = [&](double t) { return !(f.rate(t) >= kIntensityFloor); };
  if (below(0.0) || below(span)) return -std::numeric_limits<double>::infinity();
  if (c.size() == 3 && c[2] != 0.0) {
    const double vertex = -c[1] / (2.0 * c[2]);
    if (vertex > 0.0 && vertex < span && below(vertex))
      return -std::numeric_limits<double>::infinity();
  }
  double ll = -f.integral(0.0, span);
  for (double t : event_times) ll += std::log(f.rate(t));
  return ll;
}

/// Homogeneous log-likelihood n log(rate) - rate span, with 0 log 0 = 0.
inline double homogeneous_log_likelihood(double rate, std::size_t n_events, double span) {
  if (n_events == 0) return -rate * span;
  return static_cast<double>(n_events) * std::log(rate) - rate * span;
}

namespace detail {

/// Coefficients in time units from coefficients in rescaled time u = t / span.
inline PolyIntensity from_unit_time(const std::vector<double>& unit, double span, double scale) {
  PolyIntensity f;
  double s = 1.0;
  for (double c : unit) {
    f.coeffs.push_back(c * scale / s);
    s *= span;
  }
  return f;
}

}  // namespace detail

/// Inhomogeneous-Poisson MLE with lambda(t) = a + b t [+ c t^2] >= floor on
/// [0, span]. The search is seeded at the homogeneous MLE (and, for degree 2,
/// also at the linear fit), so the fitted likelihood never falls below the
/// nested models' likelihood.
inline PoissonFit fit_poly_intensity(std::span<const double> event_times, double span, int degree,
                                     const SimplexOptions& opt = {}) {
  detail::require(span > 0.0 && std::isfinite(span), "fit_poly_intensity: span must be > 0");
  detail::require(degree == 1 || degree == 2, "fit_poly_intensity: degree must be 1 or 2");

  if (event_times.empty()) {
    PoissonFit fb{PolyIntensity{{kIntensityFloor}}, 0.0, true, true};
    fb.log_likelihood = poisson_log_likelihood(fb.intensity, event_times, span);
    return fb;
  }

  const double rate0 = fit_homogeneous(event_times, span);
  const auto dims = static_cast<std::size_t>(degree) + 1;
  auto objective = [&](const std::vector<double>& x) {
    return -poisson_log_likelihood(detail::from_unit_time(x, span, rate0), event_times, span);
  };

  std::vector<std::vector<double>> starts{std::vector<double>(dims, 0.0)};
  starts[0][0] = 1.0;
  if (degree == 2) {
    const auto lin = fit_poly_intensity(event_times, span, 1, opt);
    starts.push_back({lin.intensity.coeffs[0] / rate0, lin.intensity.coeffs[1] * span / rate0, 0.0});
  }

  SimplexResult best;
  for (const auto& x0 : starts) {
    auto r = nelder_mead(objective, x0, opt);
    if (r.value < best.value || best.x.empty()) best = std::move(r);
  }
  SimplexOptions polish = opt;
  polish.initial_step = 0.05;
  auto r = nelder_mead(objective, best.x, polish);
  if (r.value <= best.value) best = std::move(r);

  PoissonFit fit;
  fit.intensity = detail::from_unit_time(best.x, span, rate0);
  fit.log_likelihood = -best.value;
  fit.converged = best.converged;
  return fit;
}

/// 1 - exp(-int_t^{t+h} lambda). The integral is floored at floor * h so
/// extrapolation past the fitted span cannot produce negative rates.
inline double poisson_predict(const PolyIntensity& f, double t, double horizon) {
  detail::require(horizon >= 0.0, "poisson_predict: horizon must be >= 0");
  if (horizon == 0.0) return 0.0;
  const double mass = std::max(f.integral(t, t + horizon), kIntensityFloor * horizon);
  return -std::expm1(-mass);
}

inline double poisson_predict(double rate, double horizon) {
  return poisson_predict(PolyIntensity{{rate}}, 0.0, horizon);
}

inline double naive_predict(std::span<const int> train_labels) {
  if (train_labels.empty()) throw DataError("naive_predict: empty training set");
  const auto frauds = std::count(train_labels.begin(), train_labels.end(), 1);
  return static_cast<double>(frauds) / static_cast<double>(train_labels.size());
}

/// Random-walk forecast: the score observed on transaction i is the
/// prediction for transaction i + 1. `previous` is the last score seen before
/// the first element of `scores`.
inline std::vector<double> score_predict(std::span<const double> scores, double previous) {
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) {
    out.push_back(previous);
    previous = s;
  }
  return out;
}

}  // namespace cirkf
