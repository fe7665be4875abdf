// Single-client walkthrough: generate a synthetic client, calibrate the
// Kalman model on the first 80% of its risk scores, predict the rest one
// transaction ahead and compare against the risk-score random walk.

#include <cstdio>

#include "cirkf/cirkf.hpp"

int main() {
  using namespace cirkf;

  // Persistent, bursty intensity targeting a 2% fraud rate.
  const CirParams shape_params{0.01, 0.02, std::sqrt(2.0 * 0.01 * 0.02 / 0.05)};
  const auto client = generate_client(shape_params, 2000, 0.02, 0.8, 7);
  std::printf("client: %zu transactions, %zu frauds, label jump %.4f\n", client.series.size(),
              client.series.fraud_count(), client.label_jump);

  const auto split = chronological_split(client.series);
  const auto model = fit_kf(split.train.risk_scores);
  const auto& c = model.calibration;
  std::printf("calibrated: kappa %.4g theta %.4g sigma %.4g w %.4g (loglik %.2f, %s)\n",
              c.params.kappa, c.params.theta, c.params.sigma, c.w, c.log_likelihood,
              c.converged ? "converged" : "not converged");
  if (model.correction.alpha_shift > 0.0)
    std::printf("shift: alpha %.4g, %zu negative filtered values\n", model.correction.alpha_shift,
                model.correction.n_negative);

  const auto kf = rolling_kf_predictions(model, split.test.risk_scores);
  const auto rw = score_predict(split.test.risk_scores, split.train.risk_scores.back());
  const auto& labels = *split.test.labels;
  std::printf("test AUC: KFApproach %.3f  ScoreApproach %.3f\n", roc_auc(kf, labels),
              roc_auc(rw, labels));
  std::printf("test AP:  KFApproach %.3f  ScoreApproach %.3f\n", average_precision(kf, labels),
              average_precision(rw, labels));
}
