#include <gtest/gtest.h>

#include "bro/distributional.hpp"
#include "bro/errors.hpp"
#include "oracles.hpp"

using namespace bro;

namespace {

Vector<double> vec(std::initializer_list<double> v) {
  Vector<double> out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

EnsembleQuantiles example() { return {make_quantile_set(vec({1, 3})), make_quantile_set(vec({2, 4}))}; }

}  // namespace

TEST(QuantileLevels, Midpoints) {
  EXPECT_EQ(quantile_levels(1), vec({0.5}));
  EXPECT_EQ(quantile_levels(2), vec({0.25, 0.75}));
  EXPECT_EQ(quantile_levels(4), vec({0.125, 0.375, 0.625, 0.875}));
  EXPECT_THROW(quantile_levels(0), DomainError);
  const auto l = quantile_levels(100);
  for (int k = 1; k < 100; ++k) EXPECT_GT(l(k), l(k - 1));
}

TEST(QuantileHuberLoss, HandEvaluatedAnchors) {
  QuantileSet median{vec({0}), vec({0.5})};
  EXPECT_DOUBLE_EQ(quantile_huber_loss(median, vec({1}), 1.0), 0.25);
  QuantileSet high{vec({0}), vec({0.9})};
  EXPECT_DOUBLE_EQ(quantile_huber_loss(high, vec({1}), 1.0), 0.45);
  const auto same = make_quantile_set(vec({1.5, -2, 3}));
  // Equal values and targets still pair off-diagonal residuals, so use a single value.
  EXPECT_EQ(quantile_huber_loss(make_quantile_set(vec({2.0})), vec({2.0}), 1.0), 0.0);
  EXPECT_GT(quantile_huber_loss(same, same.values, 1.0), 0.0);
}

TEST(QuantileHuberLoss, Errors) {
  QuantileSet empty{Vector<double>(0), Vector<double>(0)};
  EXPECT_THROW(quantile_huber_loss(empty, vec({1}), 1.0), DomainError);
  EXPECT_THROW(quantile_huber_loss(make_quantile_set(vec({1})), Vector<double>(0), 1.0), DomainError);
  EXPECT_THROW(quantile_huber_loss(make_quantile_set(vec({1})), vec({1}), 0.0), DomainError);
  EXPECT_THROW(quantile_huber_loss(make_quantile_set(vec({1})), vec({NAN}), 1.0), DomainError);
}

TEST(QuantileHuberLoss, MatchesBruteForceOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int k = 1 + static_cast<int>(rng.index(8));
    const int m = 1 + static_cast<int>(rng.index(8));
    const double kappa = rng.uniform(0.1, 3.0);
    const auto pred = make_quantile_set(oracle::random_matrix(k, 1, rng, 2.0));
    const Vector<double> targets = oracle::random_matrix(m, 1, rng, 2.0);
    EXPECT_NEAR(quantile_huber_loss(pred, targets, kappa),
                oracle::quantile_huber_reference(pred.values, pred.levels, targets, kappa), 1e-8);
  }
}

TEST(QuantileHuberLoss, ZeroIffAllResidualsZero) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const auto pred = make_quantile_set(oracle::random_matrix(3, 1, rng));
    const Vector<double> targets = oracle::random_matrix(4, 1, rng);
    EXPECT_GT(quantile_huber_loss(pred, targets, 1.0), 0.0);
  }
  EXPECT_EQ(quantile_huber_loss(make_quantile_set(vec({0.7, 0.7})), vec({0.7, 0.7, 0.7}), 1.0), 0.0);
}

TEST(QuantileHuberLoss, SmallKappaApproachesPinball) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto pred = make_quantile_set(oracle::random_matrix(5, 1, rng));
    const Vector<double> targets = oracle::random_matrix(6, 1, rng);
    const double pinball = oracle::pinball_reference(pred.values, pred.levels, targets);
    EXPECT_NEAR(quantile_huber_loss(pred, targets, 1e-4), pinball, 1e-2 * pinball);
  }
}

TEST(QuantileHuberLoss, BatchGradientMatchesFiniteDifferences) {
  Rng rng(4);
  const Matrix<double> pred = oracle::random_matrix(6, 5, rng);
  const Matrix<double> targets = oracle::random_matrix(7, 5, rng, 1.5);
  const Vector<double> levels = quantile_levels(6);
  Matrix<double> grad;
  const double loss = quantile_huber_loss_batch<double>(pred, targets, levels, 1.0, &grad);
  const auto numeric = oracle::numeric_gradient(pred, [&](const Matrix<double>& p) {
    return quantile_huber_loss_batch<double>(p, targets, levels, 1.0, nullptr);
  });
  EXPECT_LE(oracle::max_rel_error(grad, numeric), 1e-5);

  // Batch mean of per-sample losses.
  double mean = 0.0;
  for (Eigen::Index b = 0; b < 5; ++b) {
    mean += oracle::quantile_huber_reference(pred.col(b), levels, targets.col(b), 1.0) / 5.0;
  }
  EXPECT_NEAR(loss, mean, 1e-12);
}

TEST(QuantileHuberLoss, FloatKernelAgreesWithDouble) {
  Rng rng(5);
  const Matrix<double> pred = oracle::random_matrix(100, 16, rng);
  const Matrix<double> targets = oracle::random_matrix(100, 16, rng);
  const Vector<double> levels = quantile_levels(100);
  const double d = quantile_huber_loss_batch<double>(pred, targets, levels, 1.0, nullptr);
  const float f = quantile_huber_loss_batch<float>(pred.cast<float>(), targets.cast<float>(),
                                                   levels.cast<float>(), 1.0f, nullptr);
  EXPECT_NEAR(f, d, 1e-4 * d);
}

TEST(Ensemble, WorkedExamples) {
  const auto e = example();
  EXPECT_DOUBLE_EQ(ensemble_mean_q(e), 2.5);
  EXPECT_EQ(ensemble_mean_per_quantile(e).values, vec({1.5, 3.5}));
  EXPECT_EQ(ensemble_min_per_quantile(e).values, vec({1, 3}));
  EXPECT_DOUBLE_EQ(disagreement(e), 0.5);
  EXPECT_DOUBLE_EQ(optimistic_q(e, 1.0), 3.0);
  EXPECT_DOUBLE_EQ(optimistic_q(e, 0.0), ensemble_mean_q(e));
  EXPECT_THROW(optimistic_q(e, -0.1), DomainError);
  EXPECT_THROW(ensemble_mean_q({make_quantile_set(vec({1})), make_quantile_set(vec({1, 2}))}), ShapeError);
}

TEST(Ensemble, AlgebraicProperties) {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.index(10));
    EnsembleQuantiles e{make_quantile_set(oracle::random_matrix(k, 1, rng)),
                        make_quantile_set(oracle::random_matrix(k, 1, rng))};
    const EnsembleQuantiles swapped{e.critic2, e.critic1};
    EXPECT_NEAR(ensemble_mean_per_quantile(e).values.mean(), ensemble_mean_q(e), 1e-12);
    EXPECT_TRUE((ensemble_min_per_quantile(e).values.array() <=
                 ensemble_mean_per_quantile(e).values.array()).all());
    EXPECT_DOUBLE_EQ(disagreement(e), disagreement(swapped));
    EXPECT_GE(disagreement(e), 0.0);
    double previous = ensemble_mean_q(e);
    for (double beta : {0.0, 0.1, 0.5, 1.0, 3.0}) {
      const double q = optimistic_q(e, beta);
      EXPECT_GE(q, previous - 1e-12);
      EXPECT_NEAR(q, ensemble_mean_q(e) + beta * disagreement(e), 1e-12);
      previous = q;
    }
    const EnsembleQuantiles same{e.critic1, e.critic1};
    EXPECT_EQ(ensemble_mean_per_quantile(same).values, e.critic1.values);
    EXPECT_EQ(ensemble_min_per_quantile(same).values, e.critic1.values);
    EXPECT_NEAR(optimistic_q(same, 2.0), ensemble_mean_q(same), 1e-12);
    // Permuting quantile order leaves the scalar mean unchanged.
    EnsembleQuantiles reversed{make_quantile_set(e.critic1.values.reverse()),
                               make_quantile_set(e.critic2.values.reverse())};
    EXPECT_NEAR(ensemble_mean_q(reversed), ensemble_mean_q(e), 1e-12);
  }
}
