#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library: formulas are written out directly, in their
// textbook form, and random draws use only <random>.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

namespace oracle {

/// Pairwise Mann-Whitney AUC: (#pos > neg + 1/2 #ties) / (P N).
inline double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double greater2 = 0.0;  // twice the count, kept integral
  double np = 0.0, nn = 0.0;
  for (int v : y) (v == 1 ? np : nn) += 1.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      if (s[i] > s[j]) greater2 += 2.0;
      else if (s[i] == s[j]) greater2 += 1.0;
    }
  }
  return 0.5 * greater2 / (np * nn);
}

/// Average precision by enumerating every distinct threshold from the top,
/// recounting true and false positives from scratch at each one.
inline double brute_ap(const std::vector<double>& s, const std::vector<int>& y) {
  std::set<double, std::greater<>> thresholds(s.begin(), s.end());
  double n_pos = 0.0;
  for (int v : y) n_pos += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] >= t) (y[i] == 1 ? tp : fp) += 1;
    }
    const double recall = static_cast<double>(tp) / n_pos;
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

struct Affine {
  double a;
  double b;
  double gamma;
};

/// Bond-pricing coefficients in their original form:
///   B = 2 (e^{g h} - 1) / (2 g + (g + k)(e^{g h} - 1))
///   A = (2 k th / s^2) log(2 g e^{(g + k) h / 2} / (2 g + (g + k)(e^{g h} - 1)))
/// so that P = 1 - exp(A - B lambda).
inline Affine affine(double kappa, double theta, double sigma, double h) {
  const double g = std::sqrt(kappa * kappa + 2.0 * sigma * sigma);
  const double em1 = std::expm1(g * h);
  const double den = 2.0 * g + (g + kappa) * em1;
  const double b = 2.0 * em1 / den;
  const double a = (2.0 * kappa * theta / (sigma * sigma)) *
                   (std::log(2.0 * g / den) + 0.5 * (g + kappa) * h);
  return {a, b, g};
}

struct FilterOut {
  std::vector<double> lambda_filt;
  std::vector<double> lambda_pred;
  std::vector<double> v_filt;
  double loglik;
};

/// Straight-line Kalman recursion for the CIR state-space model.
inline FilterOut kalman(const std::vector<double>& y, double kappa, double theta, double sigma,
                        double w, double dt, double h, double lambda0, double v0) {
  const double beta = std::exp(-kappa * dt);
  const double alpha = theta * (1.0 - beta);
  const double s2 = sigma * sigma;
  const Affine c = affine(kappa, theta, sigma, h);
  const double a = c.a;
  const double b = -c.b;
  FilterOut out{{}, {}, {}, 0.0};
  double lam = lambda0, v = v0;
  for (double obs : y) {
    const double lp = std::max(lam, 0.0);
    const double eta2 = s2 / kappa * lp * (beta - beta * beta) +
                        theta * s2 / (2.0 * kappa) * (1.0 - beta) * (1.0 - beta);
    const double lpred = alpha + beta * lam;
    const double vpred = beta * beta * v + eta2;
    const double e = obs - a - b * lpred;
    const double psi = w * w + b * b * vpred;
    const double k = b * vpred / psi;
    lam = lpred + k * e;
    v = (1.0 - k * b) * vpred;
    out.loglik += -0.5 * std::log(psi) - 0.5 * e * e / psi;
    out.lambda_pred.push_back(lpred);
    out.lambda_filt.push_back(lam);
    out.v_filt.push_back(v);
  }
  return out;
}

/// One exact CIR transition: c times a noncentral chi-square. For d > 1 it is
/// (Z + sqrt(nc))^2 + chi2(d - 1); otherwise a Poisson mixture of central
/// chi-squares.
class CirSampler {
 public:
  CirSampler(double kappa, double theta, double sigma, double dt)
      : decay_(std::exp(-kappa * dt)),
        c_(sigma * sigma * (1.0 - std::exp(-kappa * dt)) / (4.0 * kappa)),
        d_(4.0 * kappa * theta / (sigma * sigma)) {}

  template <typename Rng>
  double operator()(double lambda, Rng& rng) const {
    const double nc = lambda * decay_ / c_;
    if (d_ > 1.0) {
      const double z = std::normal_distribution<double>(0.0, 1.0)(rng) + std::sqrt(nc);
      return c_ * (z * z + std::chi_squared_distribution<double>(d_ - 1.0)(rng));
    }
    const long j = nc > 0.0 ? std::poisson_distribution<long>(0.5 * nc)(rng) : 0;
    const double k = d_ + 2.0 * static_cast<double>(j);
    return c_ * std::chi_squared_distribution<double>(k)(rng);
  }

 private:
  double decay_, c_, d_;
};

struct McEstimate {
  double mean;
  double se;
};

/// Monte-Carlo estimate of 1 - E[exp(-int_0^h lambda du)] with trapezoidal
/// integration over exact-sampled paths.
inline McEstimate mc_fraud_probability(double kappa, double theta, double sigma, double lambda0,
                                       double h, std::size_t n_paths, std::size_t n_steps,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double dt = h / static_cast<double>(n_steps);
  const CirSampler step(kappa, theta, sigma, dt);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t p = 0; p < n_paths; ++p) {
    double lam = lambda0, integral = 0.0;
    for (std::size_t i = 0; i < n_steps; ++i) {
      const double next = step(lam, rng);
      integral += 0.5 * (lam + next) * dt;
      lam = next;
    }
    const double x = 1.0 - std::exp(-integral);
    sum += x;
    sum2 += x * x;
  }
  const double n = static_cast<double>(n_paths);
  const double mean = sum / n;
  const double var = (sum2 - n * mean * mean) / (n - 1.0);
  return {mean, std::sqrt(std::max(var, 0.0) / n)};
}

}  // namespace oracle
