#pragma once

// Nelder-Mead downhill simplex minimizer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "cirkf/errors.hpp"

namespace cirkf {

struct SimplexOptions {
  double initial_step{0.5};     ///< offset of the initial vertices along each axis
  double tolerance{1e-8};       ///< stop when the simplex diameter falls below this
  std::size_t max_iterations{2000};
  double reflection{1.0};
  double expansion{2.0};
  double contraction{0.5};
  double shrink{0.5};
};

struct SimplexResult {
  std::vector<double> x;
  double value{std::numeric_limits<double>::infinity()};
  std::size_t iterations{0};
  std::size_t evaluations{0};
  bool converged{false};
};

/// Minimize `f` starting from `x0`. Non-finite objective values are treated
/// as +inf so infeasible regions can be signalled by returning NaN or inf.
/// The returned point is never worse than `x0`.
template <class F>
SimplexResult nelder_mead(F&& f, const std::vector<double>& x0, const SimplexOptions& opt = {}) {
  const std::size_t n = x0.size();
  detail::require(n >= 1, "nelder_mead: empty starting point");

  SimplexResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += opt.initial_step;
  for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);

  auto diameter = [&]() {
    double d = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
      for (std::size_t k = 0; k < n; ++k)
        d = std::max(d, std::abs(pts[order[i]][k] - pts[order[0]][k]));
    return d;
  };
  auto sort_vertices = [&]() {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
  };
  auto along = [&](double coef, std::vector<double>& out) {
    const auto& worst = pts[order[n]];
    for (std::size_t k = 0; k < n; ++k) out[k] = centroid[k] + coef * (centroid[k] - worst[k]);
  };

  sort_vertices();
  while (res.iterations < opt.max_iterations) {
    if (diameter() < opt.tolerance) {
      res.converged = true;
      break;
    }
    ++res.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) centroid[k] += pts[order[i]][k];
    for (double& c : centroid) c /= static_cast<double>(n);

    const std::size_t worst = order[n];
    const double best_val = vals[order[0]];
    const double second_worst_val = vals[order[n - 1]];

    along(opt.reflection, trial);
    const double fr = eval(trial);
    if (fr < best_val) {
      along(opt.reflection * opt.expansion, trial2);
      const double fe = eval(trial2);
      if (fe < fr) {
        pts[worst] = trial2;
        vals[worst] = fe;
      } else {
        pts[worst] = trial;
        vals[worst] = fr;
      }
    } else if (fr < second_worst_val) {
      pts[worst] = trial;
      vals[worst] = fr;
    } else {
      const bool outside = fr < vals[worst];
      along(outside ? opt.reflection * opt.contraction : -opt.contraction, trial2);
      const double fc = eval(trial2);
      if (fc < std::min(fr, vals[worst])) {
        pts[worst] = trial2;
        vals[worst] = fc;
      } else {
        const auto best = pts[order[0]];
        for (std::size_t i = 1; i <= n; ++i) {
          auto& p = pts[order[i]];
          for (std::size_t k = 0; k < n; ++k) p[k] = best[k] + opt.shrink * (p[k] - best[k]);
          vals[order[i]] = eval(p);
        }
      }
    }
    sort_vertices();
  }
  if (!res.converged && diameter() < opt.tolerance) res.converged = true;

  res.x = pts[order[0]];
  res.value = vals[order[0]];
  return res;
}

}  // namespace cirkf
