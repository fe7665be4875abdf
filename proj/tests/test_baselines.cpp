#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "cirkf/baselines.hpp"
#include "cirkf/metrics.hpp"

using namespace cirkf;

namespace {

/// Composite Simpson rule; exact for polynomials up to degree 3.
double simpson(const PolyIntensity& f, double a, double b, int n = 64) {
  const double h = (b - a) / n;
  double s = f.rate(a) + f.rate(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f.rate(a + i * h);
  return s * h / 3.0;
}

std::vector<double> random_events(std::mt19937_64& rng, double span, std::size_t n, double skew) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ev;
  for (std::size_t i = 0; i < n; ++i) ev.push_back(span * std::pow(u(rng), skew));
  std::sort(ev.begin(), ev.end());
  return ev;
}

}  // namespace

TEST(Homogeneous, RateIsCountOverSpan) {
  EXPECT_DOUBLE_EQ(fit_homogeneous(std::vector<double>{1, 5, 9, 20, 70}, 100.0), 0.05);
  EXPECT_EQ(fit_homogeneous(std::vector<double>{}, 100.0), 0.0);
  EXPECT_THROW(fit_homogeneous(std::vector<double>{1.0}, 0.0), DomainError);
  EXPECT_DOUBLE_EQ(homogeneous_log_likelihood(0.05, 5, 100.0), 5.0 * std::log(0.05) - 5.0);
  EXPECT_DOUBLE_EQ(homogeneous_log_likelihood(0.0, 0, 100.0), 0.0);
}

TEST(Homogeneous, RateWithinSamplingError) {
  std::mt19937_64 rng(11);
  std::exponential_distribution<double> gap(0.02);
  const double span = 1e5;
  std::vector<double> ev;
  for (double t = gap(rng); t < span; t += gap(rng)) ev.push_back(t);
  EXPECT_NEAR(fit_homogeneous(ev, span), 0.02, 3.0 * std::sqrt(0.02 / span));
}

/// Event times on [0, span] thinned from a bounded rate function.
template <typename Rate>
std::vector<double> thinned(std::mt19937_64& rng, double span, double peak, Rate rate) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ev;
  for (double t = 0.0;;) {
    t += -std::log(u(rng)) / peak;
    if (t >= span) return ev;
    if (u(rng) * peak < rate(t)) ev.push_back(t);
  }
}

TEST(PolyFit, ConstantRateGivesFlatFit) {
  std::mt19937_64 rng(12);
  const double span = 20000.0;
  const auto ev = thinned(rng, span, 0.02, [](double) { return 0.02; });
  const double homo = fit_homogeneous(ev, span);
  const auto lin = fit_poly_intensity(ev, span, 1);
  const auto quad = fit_poly_intensity(ev, span, 2);
  // Slope noise: sd(b) ~ sqrt(12 rate / span^3).
  EXPECT_NEAR(lin.intensity.coeffs[1], 0.0, 4.0 * std::sqrt(12.0 * 0.02 / std::pow(span, 3)));
  EXPECT_NEAR(lin.intensity.rate(0.0), homo, 0.25 * homo);
  EXPECT_NEAR(quad.intensity.rate(0.0), homo, 0.4 * homo);
  EXPECT_NEAR(quad.intensity.rate(span), homo, 0.4 * homo);
}

TEST(PolyFit, IncreasingRateGivesPositiveSlope) {
  std::mt19937_64 rng(13);
  const double span = 1000.0;
  const auto ev = thinned(rng, span, 0.01 + 0.0005 * span, [](double t) { return 0.01 + 0.0005 * t; });
  EXPECT_GT(fit_poly_intensity(ev, span, 1).intensity.coeffs[1], 0.0);
}

TEST(PolyFit, MidSpanClusterGivesConcaveFit) {
  std::mt19937_64 rng(14);
  const double span = 1000.0;
  const auto ev = thinned(rng, span, 0.2, [&](double t) {
    const double x = (t - 0.5 * span) / (0.15 * span);
    return 0.01 + 0.19 * std::exp(-0.5 * x * x);
  });
  EXPECT_LT(fit_poly_intensity(ev, span, 2).intensity.coeffs[2], 0.0);
}

TEST(PoissonPredict, LinearRateExample) {
  const PolyIntensity f{{0.01, 0.002}};
  EXPECT_NEAR(poisson_predict(f, 10.0, 1.0), 1.0 - std::exp(-(0.01 + 0.002 * 10.5)), 1e-15);
  EXPECT_NEAR(poisson_predict(f, 10.0, 1.0), 1.0 - std::exp(-simpson(f, 10.0, 11.0)), 1e-15);
}

TEST(ScorePredict, ConstantScores) {
  EXPECT_EQ(score_predict(std::vector<double>(4, 0.2), 0.2), std::vector<double>(4, 0.2));
}

TEST(PolyIntensity, IntegralMatchesQuadrature) {
  const PolyIntensity f{{0.02, 1e-4, -2e-7}};
  EXPECT_NEAR(f.integral(3.0, 250.0), simpson(f, 3.0, 250.0), 1e-12);
  EXPECT_EQ(f.degree(), 2);
  EXPECT_DOUBLE_EQ(f.rate(10.0), 0.02 + 1e-3 - 2e-5);
}

TEST(PoissonLogLikelihood, DirectFormAndFloor) {
  const PolyIntensity f{{0.01, 1e-4}};
  const std::vector<double> ev{10.0, 50.0, 90.0};
  double ref = -simpson(f, 0.0, 100.0);
  for (double t : ev) ref += std::log(0.01 + 1e-4 * t);
  EXPECT_NEAR(poisson_log_likelihood(f, ev, 100.0), ref, 1e-12);
  EXPECT_EQ(poisson_log_likelihood(PolyIntensity{{0.01, -1e-3}}, ev, 100.0),
            -std::numeric_limits<double>::infinity());
  EXPECT_EQ(poisson_log_likelihood(PolyIntensity{{0.01, -0.002, 2e-5}}, ev, 100.0),
            -std::numeric_limits<double>::infinity());
}

TEST(PolyFit, IncreasingTrendDetected) {
  std::mt19937_64 rng(1);
  const auto ev = random_events(rng, 1000.0, 60, 0.4);
  const auto lin = fit_poly_intensity(ev, 1000.0, 1);
  EXPECT_GT(lin.intensity.coeffs[1], 0.0);
  EXPECT_TRUE(lin.converged);
  EXPECT_NEAR(lin.log_likelihood, poisson_log_likelihood(lin.intensity, ev, 1000.0), 1e-9);
}

TEST(PolyFit, RecoversLinearIntensity) {
  // Thinning from lambda(t) = 0.01 + 4e-5 t over [0, 5000].
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double span = 5000.0, peak = 0.01 + 4e-5 * span;
  std::vector<double> ev;
  for (double t = 0.0;;) {
    t += -std::log(u(rng)) / peak;
    if (t >= span) break;
    if (u(rng) * peak < 0.01 + 4e-5 * t) ev.push_back(t);
  }
  const auto lin = fit_poly_intensity(ev, span, 1);
  EXPECT_NEAR(lin.intensity.coeffs[0], 0.01, 0.01);
  EXPECT_NEAR(lin.intensity.coeffs[1], 4e-5, 0.8e-5);
}

TEST(PolyFit, NestedModelsNeverLose) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const double span = 500.0 + 50.0 * rep;
    const auto ev = random_events(rng, span, 1 + rep, 0.3 + 0.05 * rep);
    const double homo =
        homogeneous_log_likelihood(fit_homogeneous(ev, span), ev.size(), span);
    const auto lin = fit_poly_intensity(ev, span, 1);
    const auto quad = fit_poly_intensity(ev, span, 2);
    EXPECT_GE(lin.log_likelihood, homo - 1e-6);
    EXPECT_GE(quad.log_likelihood, lin.log_likelihood - 1e-6);
    EXPECT_TRUE(std::isfinite(quad.log_likelihood));
  }
}

TEST(PolyFit, NoEventsFallsBackToFloor) {
  const auto fit = fit_poly_intensity(std::vector<double>{}, 100.0, 2);
  EXPECT_TRUE(fit.fallback);
  EXPECT_EQ(fit.intensity.coeffs, std::vector<double>{kIntensityFloor});
  EXPECT_THROW(fit_poly_intensity(std::vector<double>{1.0}, 100.0, 3), DomainError);
}

TEST(PoissonPredict, MatchesQuadrature) {
  const PolyIntensity f{{0.02, 1e-4, -2e-7}};
  for (double t : {0.0, 10.0, 123.0, 400.0}) {
    for (double h : {0.5, 1.0, 2.0}) {
      EXPECT_NEAR(poisson_predict(f, t, h), 1.0 - std::exp(-simpson(f, t, t + h)), 1e-14);
    }
  }
  EXPECT_DOUBLE_EQ(poisson_predict(0.05, 1.0), 1.0 - std::exp(-0.05));
  EXPECT_EQ(poisson_predict(f, 10.0, 0.0), 0.0);
  EXPECT_THROW(poisson_predict(f, 10.0, -1.0), DomainError);
}

TEST(PoissonPredict, NegativeExtrapolationFloored) {
  const PolyIntensity f{{0.02, -1e-4}};
  const double p = poisson_predict(f, 1000.0, 1.0);
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1e-11);
}

TEST(Naive, TrainingProportion) {
  EXPECT_DOUBLE_EQ(naive_predict(std::vector<int>{0, 1, 0, 0}), 0.25);
  EXPECT_EQ(naive_predict(std::vector<int>{0, 0}), 0.0);
  EXPECT_THROW(naive_predict(std::vector<int>{}), DataError);
}

TEST(ScorePredict, LagOne) {
  EXPECT_EQ(score_predict(std::vector<double>{0.1, 0.2, 0.3}, 0.05),
            (std::vector<double>{0.05, 0.1, 0.2}));
  EXPECT_TRUE(score_predict(std::vector<double>{}, 0.05).empty());
}

TEST(ScorePredict, InformativeOnlyWhenLabelsPersist) {
  // Score = label + noise. With sticky labels the lag-one score predicts the
  // next label; with iid labels it cannot.
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 0.3);
  auto run = [&](bool sticky) {
    std::vector<int> y;
    std::vector<double> s;
    int state = 0;
    for (int i = 0; i < 20000; ++i) {
      if (sticky) state = u(rng) < (state ? 0.9 : 0.02) ? 1 : 0;
      else state = u(rng) < 0.17 ? 1 : 0;
      y.push_back(state);
      s.push_back(std::clamp(0.3 + 0.4 * state + z(rng), 0.0, 0.999));
    }
    return roc_auc(score_predict(s, 0.0), y);
  };
  EXPECT_GT(run(true), 0.75);
  EXPECT_NEAR(run(false), 0.5, 0.03);
}
