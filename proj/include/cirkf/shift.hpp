#pragma once

// Positivity correction for filtered intensities. The filtered path is
// translated by a positive constant alpha, S = lambda + alpha, which keeps
// dS = d lambda and turns the state into an extended CIR process
//   dS = kappa (theta + alpha - S) dt + sigma sqrt(1 - alpha / S) sqrt(S) dB.
// The drift and an averaged diffusion coefficient are then refitted by OLS
// on the discretized square-root regression.

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <span>
#include <vector>

#include "cirkf/cir.hpp"
#include "cirkf/errors.hpp"

namespace cirkf {

namespace detail {

/// Correctly rounded sum of a few doubles (Shewchuk partials, as in fsum).
inline double exact_sum(std::initializer_list<double> xs) {
  std::vector<double> partials;
  for (double x : xs) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  if (partials.empty()) return 0.0;
  std::size_t n = partials.size();
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // Round half to even across the remaining partials.
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

}  // namespace detail

/// S = source + alpha. `values` holds the rounded sums and `low` the rounding
/// errors, so values[i] + low[i] equals source[i] + alpha exactly and the
/// first differences of S are those of the source, bit for bit.
struct ShiftedPath {
  double alpha_shift{0.0};
  std::vector<double> values;
  std::vector<double> source;
  std::vector<double> low;

  [[nodiscard]] std::vector<double> first_differences() const {
    std::vector<double> d;
    if (values.size() < 2) return d;
    d.reserve(values.size() - 1);
    auto lo = [&](std::size_t i) { return low.empty() ? 0.0 : low[i]; };
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
      d.push_back(detail::exact_sum({values[i + 1], lo(i + 1), -values[i], -lo(i)}));
    return d;
  }
};

struct OlsEstimate {
  double kappa_hat{0.0};
  double theta_star_hat{0.0};
  double sigma_star_hat{0.0};
  double residual_sd{0.0};
};

struct CorrectedParams {
  CirParams params;        ///< parameters to use with the shifted intensity
  double alpha_shift{0.0};  ///< 0 when no correction was needed
  std::size_t n_negative{0};
  OlsEstimate ols{};
  bool kappa_refit_used{false};
};

inline constexpr double kShiftPercentile = 0.99;
inline constexpr double kShiftPositivityMargin = 1e-6;

/// Nearest-rank percentile: the ceil(q n)-th smallest value.
inline double nearest_rank_percentile(std::span<const double> xs, double q) {
  if (xs.empty()) throw DataError("nearest_rank_percentile: empty input");
  std::vector<double> sorted(xs.begin(), xs.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return sorted[rank - 1];
}

/// 99th percentile of the filtered intensities, raised when necessary so that
/// every shifted value is strictly positive.
inline double choose_alpha(std::span<const double> filtered) {
  if (filtered.empty()) throw DataError("choose_alpha: empty input");
  const double pct = nearest_rank_percentile(filtered, kShiftPercentile);
  const double lowest = *std::min_element(filtered.begin(), filtered.end());
  return std::max(pct, -lowest + kShiftPositivityMargin);
}

inline ShiftedPath shift_path(std::span<const double> filtered, double alpha) {
  detail::require(alpha > 0.0 && std::isfinite(alpha), "shift_path: alpha must be > 0");
  ShiftedPath out{alpha, {}, std::vector<double>(filtered.begin(), filtered.end()), {}};
  out.values.reserve(filtered.size());
  out.low.reserve(filtered.size());
  for (double v : filtered) {
    const double sum = v + alpha;
    const double bv = sum - v;
    out.values.push_back(sum);
    out.low.push_back((v - (sum - bv)) + (alpha - bv));
  }
  return out;
}

/// Least squares on
///   (S_{i+1} - S_i) / sqrt(S_i) = kappa theta* dt / sqrt(S_i) - kappa sqrt(S_i) dt + sigma* xi_i
/// with sigma* = sd(residuals) / sqrt(dt).
inline OlsEstimate ols_reestimate(const ShiftedPath& shifted, double dt) {
  const auto& s = shifted.values;
  if (s.size() < 3) throw DataError("ols_reestimate: at least 3 points required");
  detail::require(dt > 0.0, "ols_reestimate: dt must be > 0");
  for (double v : s) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DataError("ols_reestimate: values must be > 0");
  }

  const std::size_t m = s.size() - 1;
  const auto ds = shifted.first_differences();
  // Regressors x1 = dt / sqrt(S), x2 = -dt sqrt(S); coefficients (kappa theta*, kappa).
  double s11 = 0.0, s12 = 0.0, s22 = 0.0, s1y = 0.0, s2y = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double root = std::sqrt(s[i]);
    const double x1 = dt / root;
    const double x2 = -dt * root;
    const double y = ds[i] / root;
    s11 += x1 * x1;
    s12 += x1 * x2;
    s22 += x2 * x2;
    s1y += x1 * y;
    s2y += x2 * y;
  }
  const double det = s11 * s22 - s12 * s12;
  if (!(std::abs(det) > 1e-12 * s11 * s22)) {
    throw DataError("ols_reestimate: collinear regressors (constant path)");
  }
  const double c1 = (s22 * s1y - s12 * s2y) / det;
  const double c2 = (s11 * s2y - s12 * s1y) / det;

  std::vector<double> resid(m);
  double mean = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double root = std::sqrt(s[i]);
    resid[i] = ds[i] / root - c1 * dt / root + c2 * dt * root;
    mean += resid[i];
  }
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double r : resid) ss += (r - mean) * (r - mean);
  const double sd = m > 1 ? std::sqrt(ss / static_cast<double>(m - 1)) : 0.0;

  OlsEstimate est{c2, c2 != 0.0 ? c1 / c2 : 0.0, sd / std::sqrt(dt), sd};
  if (!std::isfinite(est.kappa_hat) || !std::isfinite(est.theta_star_hat) ||
      !std::isfinite(est.sigma_star_hat)) {
    throw NumericalError("ols_reestimate: non-finite estimate");
  }
  return est;
}

/// Parameters for evaluating the fraud probability on S = lambda + alpha.
/// Identity when every filtered value is positive. Otherwise theta* = theta +
/// alpha, sigma* and kappa come from the OLS refit; kappa falls back to the
/// raw value when the refit is not a valid mean-reversion rate.
inline CorrectedParams corrected_prediction_params(const CirParams& raw,
                                                   std::span<const double> filtered,
                                                   double dt) {
  raw.validate();
  if (filtered.empty()) throw DataError("corrected_prediction_params: empty input");
  CorrectedParams out{raw, 0.0, 0, {}, false};
  out.n_negative = static_cast<std::size_t>(
      std::count_if(filtered.begin(), filtered.end(), [](double v) { return v < 0.0; }));
  if (*std::min_element(filtered.begin(), filtered.end()) > 0.0) return out;

  out.alpha_shift = choose_alpha(filtered);
  const auto shifted = shift_path(filtered, out.alpha_shift);
  out.ols = ols_reestimate(shifted, dt);

  constexpr double kSigmaFloor = 1e-10;
  out.params.theta = raw.theta + out.alpha_shift;
  out.params.sigma = std::max(out.ols.sigma_star_hat, kSigmaFloor);
  if (out.ols.kappa_hat > 0.0 && std::isfinite(out.ols.kappa_hat)) {
    out.params.kappa = out.ols.kappa_hat;
    out.kappa_refit_used = true;
  }
  return out;
}

}  // namespace cirkf
