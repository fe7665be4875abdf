#pragma once

// Cox-Ingersoll-Ross intensity: parameters, transition moments, exact path
// simulation and the closed-form next-event fraud probability
//
//   d lambda = kappa (theta - lambda) dt + sigma sqrt(lambda) dB.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cirkf/errors.hpp"
#include "cirkf/random.hpp"

namespace cirkf {

struct CirParams {
  double kappa{0.0};  ///< mean-reversion rate (1/time)
  double theta{0.0};  ///< long-run mean intensity (events/time)
  double sigma{0.0};  ///< volatility coefficient

  /// 2 kappa theta > sigma^2: paths stay strictly positive. Advisory only.
  [[nodiscard]] bool feller_holds() const noexcept {
    return 2.0 * kappa * theta > sigma * sigma;
  }

  void validate() const {
    detail::require(std::isfinite(kappa) && kappa > 0.0, "CirParams: kappa must be > 0");
    detail::require(std::isfinite(theta) && theta > 0.0, "CirParams: theta must be > 0");
    detail::require(std::isfinite(sigma) && sigma > 0.0, "CirParams: sigma must be > 0");
  }

  friend bool operator==(const CirParams&, const CirParams&) = default;
};

struct IntensityPath {
  double t0{0.0};
  double dt{1.0};
  std::vector<double> values;

  [[nodiscard]] double time_at(std::size_t i) const noexcept {
    return t0 + dt * static_cast<double>(i);
  }
};

/// E[exp(-int_t^{t+h} lambda)] = exp(a_coef - b_coef * lambda_t).
struct AffineCoefficients {
  double a_coef{0.0};
  double b_coef{0.0};
  double gamma{0.0};
  double horizon{0.0};
};

enum class SamplingScheme {
  exact,                  ///< noncentral chi-square transition law
  euler_full_truncation,  ///< Euler-Maruyama on max(lambda, 0); cross-checks only
};

inline double cir_mean(const CirParams& p, double lambda0, double t) {
  p.validate();
  detail::require(t >= 0.0, "cir_mean: t must be >= 0");
  detail::require(lambda0 >= 0.0, "cir_mean: lambda0 must be >= 0");
  const double decay = std::exp(-p.kappa * t);
  return decay * lambda0 + p.theta * (1.0 - decay);
}

inline double cir_variance(const CirParams& p, double lambda0, double t) {
  p.validate();
  detail::require(t >= 0.0, "cir_variance: t must be >= 0");
  detail::require(lambda0 >= 0.0, "cir_variance: lambda0 must be >= 0");
  const double decay = std::exp(-p.kappa * t);
  const double one_minus = -std::expm1(-p.kappa * t);
  const double s2 = p.sigma * p.sigma;
  return s2 / p.kappa * lambda0 * decay * one_minus +
         p.theta * s2 / (2.0 * p.kappa) * one_minus * one_minus;
}

/// Exact one-step transition sampler for a fixed step `dt`:
/// lambda_next = c * chi2'(d, lambda * e^{-kappa dt} / c).
class CirTransition {
 public:
  CirTransition(const CirParams& p, double dt, SamplingScheme scheme = SamplingScheme::exact)
      : params_(p), dt_(dt), scheme_(scheme) {
    p.validate();
    detail::require(std::isfinite(dt) && dt > 0.0, "CirTransition: dt must be > 0");
    decay_ = std::exp(-p.kappa * dt);
    scale_ = p.sigma * p.sigma * (-std::expm1(-p.kappa * dt)) / (4.0 * p.kappa);
    dof_ = 4.0 * p.kappa * p.theta / (p.sigma * p.sigma);
    sqrt_dt_ = std::sqrt(dt);
  }

  /// For the Euler scheme `state` is the (possibly negative) auxiliary value;
  /// callers report max(state, 0).
  double step(double state, Rng& rng) const {
    if (scheme_ == SamplingScheme::exact) {
      return scale_ * noncentral_chi_square(dof_, state * decay_ / scale_, rng);
    }
    const double pos = std::max(state, 0.0);
    return state + params_.kappa * (params_.theta - pos) * dt_ +
           params_.sigma * std::sqrt(pos) * sqrt_dt_ * standard_normal(rng);
  }

  [[nodiscard]] double dt() const noexcept { return dt_; }
  [[nodiscard]] SamplingScheme scheme() const noexcept { return scheme_; }

 private:
  CirParams params_;
  double dt_;
  SamplingScheme scheme_;
  double decay_{0.0};
  double scale_{0.0};
  double dof_{0.0};
  double sqrt_dt_{0.0};
};

inline IntensityPath simulate_path(const CirParams& p, double lambda0, double dt,
                                   std::size_t n_steps, std::uint64_t seed,
                                   SamplingScheme scheme = SamplingScheme::exact) {
  detail::require(lambda0 >= 0.0 && std::isfinite(lambda0), "simulate_path: lambda0 must be >= 0");
  detail::require(n_steps >= 1, "simulate_path: n_steps must be >= 1");
  const CirTransition transition(p, dt, scheme);
  Rng rng(seed);
  IntensityPath path{0.0, dt, {}};
  path.values.reserve(n_steps + 1);
  path.values.push_back(lambda0);
  double state = lambda0;
  for (std::size_t i = 0; i < n_steps; ++i) {
    state = transition.step(state, rng);
    path.values.push_back(std::max(state, 0.0));
  }
  return path;
}

/// Affine bond-price coefficients of the CIR model over `horizon`.
///
/// Evaluated in a rearranged form that avoids the cancellation of the
/// textbook expression when sigma is small:
///   B = 2g / ((gamma + kappa) g + 2 gamma e^{-gamma h}),   g = 1 - e^{-gamma h}
///   A = -(2 kappa theta / (gamma + kappa)) (h - g phi(x) / gamma),
///   x = -sigma^2 g / (gamma (gamma + kappa)),   phi(x) = log1p(x) / x.
/// Both reduce to the closed form with A = log[{2 gamma e^{(kappa+gamma)h/2} /
/// (2 gamma + (gamma+kappa)(e^{gamma h} - 1))}^{2 kappa theta / sigma^2}].
inline AffineCoefficients affine_coefficients(const CirParams& p, double horizon) {
  p.validate();
  detail::require(horizon >= 0.0, "affine_coefficients: horizon must be >= 0");
  const double s2 = p.sigma * p.sigma;
  const double gamma = std::sqrt(p.kappa * p.kappa + 2.0 * s2);
  AffineCoefficients out{0.0, 0.0, gamma, horizon};
  if (horizon == 0.0) return out;

  const double g = -std::expm1(-gamma * horizon);
  const double tail = std::isinf(horizon) ? 0.0 : std::exp(-gamma * horizon);
  out.b_coef = 2.0 * g / ((gamma + p.kappa) * g + 2.0 * gamma * tail);

  const double x = -s2 * g / (gamma * (gamma + p.kappa));
  const double phi = (x == 0.0) ? 1.0 : std::log1p(x) / x;
  out.a_coef = -(2.0 * p.kappa * p.theta / (gamma + p.kappa)) * (horizon - g * phi / gamma);
  return out;
}

/// Signs required for 1 - e^{A - B lambda} to stay in [0, 1] for lambda >= 0.
[[nodiscard]] inline bool affine_signs_valid(const AffineCoefficients& c) noexcept {
  return c.a_coef <= 0.0 && c.b_coef >= 0.0;
}

/// P(N_{t+h} - N_t = 1 | F_t) = 1 - exp(A(h) - B(h) lambda_t), clamped to [0, 1].
/// `lambda_t` may be negative (raw filter output); the clamp is monotone.
inline double fraud_probability(const AffineCoefficients& c, double lambda_t) {
  const double p = -std::expm1(c.a_coef - c.b_coef * lambda_t);
  if (!(p > 0.0)) return 0.0;
  return std::min(p, 1.0);
}

inline double fraud_probability(const CirParams& p, double lambda_t, double horizon) {
  return fraud_probability(affine_coefficients(p, horizon), lambda_t);
}

}  // namespace cirkf
