#pragma once

// Quantile value machinery: fixed midpoint quantile levels, the pairwise
// quantile Huber regression loss, and aggregation over a two-critic ensemble.

#include <cmath>

#include "bro/networks.hpp"

namespace bro {

inline constexpr double kDefaultHuberKappa = 1.0;

struct QuantileSet {
  Vector<double> values;
  Vector<double> levels;
};

struct EnsembleQuantiles {
  QuantileSet critic1;
  QuantileSet critic2;
};

// Levels (2k - 1) / (2K), k = 1..K.
Vector<double> quantile_levels(int num_quantiles);

QuantileSet make_quantile_set(Vector<double> values);

// (1 / (K M)) sum_{k,j} |tau_k - 1{t_j - q_k < 0}| Huber_kappa(t_j - q_k) / kappa.
double quantile_huber_loss(const QuantileSet& pred, const Vector<double>& targets,
                           double kappa = kDefaultHuberKappa);

double ensemble_mean_q(const EnsembleQuantiles& e);
QuantileSet ensemble_mean_per_quantile(const EnsembleQuantiles& e);
QuantileSet ensemble_min_per_quantile(const EnsembleQuantiles& e);
double disagreement(const EnsembleQuantiles& e);
double optimistic_q(const EnsembleQuantiles& e, double beta_o);

// Batched loss used by the critic update. pred is [K x B], targets [M x B];
// returns the batch mean of per-sample losses and, when grad_pred is non-null,
// writes dLoss/dpred. Targets receive no gradient.
template <class T>
T quantile_huber_loss_batch(const Matrix<T>& pred, const Matrix<T>& targets,
                            const Vector<T>& levels, T kappa, Matrix<T>* grad_pred) {
  const Eigen::Index k_count = pred.rows();
  const Eigen::Index m_count = targets.rows();
  const Eigen::Index batch = pred.cols();
  const T scale = T(1) / (T(k_count) * T(m_count) * T(batch));
  if (grad_pred != nullptr) grad_pred->setZero(k_count, batch);
  T total = T(0);
  // Branch-free Huber: with c = clamp(u, -kappa, kappa), huber(u) = c (u - c/2) / kappa
  // and huber'(u) = c / kappa. The asymmetric weight |level - 1{u < 0}| times c
  // equals level * c + (1 - 2 level) * min(c, 0). Each target updates per-quantile
  // accumulators, so the work is vectorized over the K quantiles.
  using Column = Eigen::Array<T, Eigen::Dynamic, 1>;
  const Column level = levels.array();
  const Column flip = T(1) - T(2) * level;
  Column loss(k_count), grad(k_count), u(k_count), c(k_count), wc(k_count);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto q = pred.col(b).array();
    loss.setZero();
    grad.setZero();
    for (Eigen::Index j = 0; j < m_count; ++j) {
      u = targets(j, b) - q;
      c = u.min(kappa).max(-kappa);
      wc = level * c + flip * c.min(T(0));
      loss += wc * (u - T(0.5) * c);
      grad += wc;
    }
    total += loss.sum() / kappa;
    if (grad_pred != nullptr) grad_pred->col(b) = (-grad / kappa * scale).matrix();
  }
  return total * scale;
}

}  // namespace bro
