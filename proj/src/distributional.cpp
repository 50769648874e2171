#include "bro/distributional.hpp"

#include "bro/errors.hpp"

namespace bro {

Vector<double> quantile_levels(int num_quantiles) {
  require_domain(num_quantiles >= 1, "quantile_levels: K must be >= 1");
  Vector<double> levels(num_quantiles);
  for (int k = 1; k <= num_quantiles; ++k) {
    levels(k - 1) = (2.0 * k - 1.0) / (2.0 * num_quantiles);
  }
  return levels;
}

QuantileSet make_quantile_set(Vector<double> values) {
  require_domain(values.size() >= 1, "quantile set must hold at least one value");
  Vector<double> levels = quantile_levels(static_cast<int>(values.size()));
  return {std::move(values), std::move(levels)};
}

double quantile_huber_loss(const QuantileSet& pred, const Vector<double>& targets, double kappa) {
  require_domain(pred.values.size() >= 1 && targets.size() >= 1,
                 "quantile_huber_loss: empty predictions or targets");
  require_shape(pred.values.size() == pred.levels.size(),
                "quantile_huber_loss: values and levels lengths differ");
  require_domain(kappa > 0.0, "quantile_huber_loss: kappa must be positive");
  require_domain(pred.values.allFinite() && targets.allFinite(),
                 "quantile_huber_loss: non-finite input");
  return quantile_huber_loss_batch<double>(pred.values, targets, pred.levels, kappa, nullptr);
}

namespace {

void check_ensemble(const EnsembleQuantiles& e) {
  require_shape(e.critic1.values.size() >= 1 &&
                    e.critic1.values.size() == e.critic2.values.size(),
                "ensemble members must hold the same non-zero number of quantiles");
}

}  // namespace

double ensemble_mean_q(const EnsembleQuantiles& e) {
  check_ensemble(e);
  return 0.5 * (e.critic1.values.mean() + e.critic2.values.mean());
}

QuantileSet ensemble_mean_per_quantile(const EnsembleQuantiles& e) {
  check_ensemble(e);
  return {0.5 * (e.critic1.values + e.critic2.values), e.critic1.levels};
}

QuantileSet ensemble_min_per_quantile(const EnsembleQuantiles& e) {
  check_ensemble(e);
  return {e.critic1.values.cwiseMin(e.critic2.values), e.critic1.levels};
}

double disagreement(const EnsembleQuantiles& e) {
  check_ensemble(e);
  return 0.5 * (e.critic1.values - e.critic2.values).cwiseAbs().mean();
}

double optimistic_q(const EnsembleQuantiles& e, double beta_o) {
  require_domain(beta_o >= 0.0, "optimistic_q: beta_o must be >= 0");
  check_ensemble(e);
  const auto& q1 = e.critic1.values.array();
  const auto& q2 = e.critic2.values.array();
  const double k = static_cast<double>(q1.size());
  return (q1 + q2 + beta_o * (q1 - q2).abs()).sum() / (2.0 * k);
}

}  // namespace bro
