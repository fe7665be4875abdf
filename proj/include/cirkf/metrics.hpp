#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "cirkf/errors.hpp"

namespace cirkf {

namespace detail {

inline void check_metric_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("metric: scores/labels length mismatch");
  for (int l : labels)
    if (l != 0 && l != 1) throw DataError("metric: labels must be 0 or 1");
  for (double s : scores)
    if (std::isnan(s)) throw DataError("metric: NaN score");
}

inline std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace detail

/// Area under the ROC curve as the Mann-Whitney statistic
/// P(s_pos > s_neg) + P(s_pos = s_neg) / 2, from mid-ranks.
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_metric_inputs(scores, labels);
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DataError("roc_auc: both classes must be present");

  const auto idx = detail::order_by_score(scores, false);
  // Twice the positive rank sum keeps mid-ranks integral.
  double twice_rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    std::size_t pos_in_group = 0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      pos_in_group += static_cast<std::size_t>(labels[idx[j]]);
      ++j;
    }
    // ranks i+1 .. j, mid-rank (i + 1 + j) / 2
    twice_rank_sum += static_cast<double>(pos_in_group) * static_cast<double>(i + 1 + j);
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double u = 0.5 * (twice_rank_sum - np * (np + 1.0));
  return u / (np * static_cast<double>(n_neg));
}

/// Step-wise area under the precision-recall curve,
/// sum_k (R_k - R_{k-1}) P_k over descending distinct score thresholds.
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
  detail::check_metric_inputs(scores, labels);
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0) throw DataError("average_precision: no positive labels");

  const auto idx = detail::order_by_score(scores, true);
  std::size_t tp = 0;
  std::size_t seen = 0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      tp += static_cast<std::size_t>(labels[idx[j]]);
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

/// Pearson correlation between a binary label and a continuous score.
/// Returns 0 when either variable is constant.
inline double point_biserial(std::span<const double> scores, std::span<const int> labels) {
  detail::check_metric_inputs(scores, labels);
  const std::size_t n = scores.size();
  if (n < 2) return 0.0;
  double ms = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ms += scores[i];
    ml += labels[i];
  }
  ms /= static_cast<double>(n);
  ml /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = scores[i] - ms;
    const double dy = labels[i] - ml;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

/// Median (mean of the two middle values for even sizes). Empty input is NaN.
inline double median(std::vector<double> xs) {
  if (xs.empty()) return std::nan("");
  const auto mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid), xs.end());
  const double upper = xs[mid];
  if (xs.size() % 2 == 1) return upper;
  const double lower = *std::max_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace cirkf
