#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bro/errors.hpp"
#include "bro/policy.hpp"
#include "oracles.hpp"

using namespace bro;

namespace {

GaussianPolicyOutput policy1(double mean, double log_std) {
  return make_policy_output(Vector<double>::Constant(1, mean), Vector<double>::Constant(1, log_std));
}

}  // namespace

TEST(SampleAction, ZeroNoiseAtOriginHasStandardNormalDensity) {
  const auto s = squash_noise(policy1(0, 0), Vector<double>::Zero(1), 1.0);
  EXPECT_EQ(s.action(0), 0.0);
  const double expected = -0.5 * std::log(2 * std::numbers::pi) - std::log(1 + kSquashEpsilon);
  EXPECT_NEAR(s.log_prob, expected, 1e-12);
  EXPECT_NEAR(s.log_prob, -0.9189, 1e-4);

  // Per-dimension additivity.
  GaussianPolicyOutput p3 = make_policy_output(Vector<double>::Zero(3), Vector<double>::Zero(3));
  EXPECT_NEAR(squash_noise(p3, Vector<double>::Zero(3), 1.0).log_prob, 3 * expected, 1e-12);
}

TEST(SampleAction, MultiplierScalesSamplingStd) {
  Rng rng(5);
  const auto p = policy1(0.0, 0.0);
  double sum_sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = sample_action(p, rng, 0.75).pre_squash(0);
    sum_sq += u * u;
  }
  // Std error of the sample variance is sigma^2 sqrt(2/n) ~ 0.0018.
  EXPECT_NEAR(std::sqrt(sum_sq / n), 0.75, 0.005);
}

TEST(SampleAction, DeterministicUnderSeedAndConsistentWithLogProb) {
  const auto p = make_policy_output((Vector<double>(2) << 0.3, -1.2).finished(),
                                    (Vector<double>(2) << -0.5, 0.4).finished());
  Rng a(9), b(9), c(10);
  for (int i = 0; i < 100; ++i) {
    const auto sa = sample_action(p, a, 0.75);
    const auto sb = sample_action(p, b, 0.75);
    EXPECT_EQ(sa.action, sb.action);
    EXPECT_EQ(sa.log_prob, sb.log_prob);
    EXPECT_TRUE((sa.action.array().abs() < 1.0).all());
    EXPECT_EQ(sa.action, sa.pre_squash.array().tanh().matrix());
    // Multiplier 1 so the sampling distribution is the policy itself.
    const auto s1 = sample_action(p, c, 1.0);
    if ((s1.action.array().abs() < 1.0 - 1e-9).all()) {
      EXPECT_NEAR(log_prob(p, s1.action), s1.log_prob, 1e-5);
    }
  }
}

TEST(SampleAction, NonPositiveMultiplierRejected) {
  Rng rng(0);
  EXPECT_THROW(sample_action(policy1(0, 0), rng, 0.0), DomainError);
}

TEST(SampleAction, EntropyFiniteNearBoundary) {
  const auto s = squash_noise(policy1(30.0, 0.0), Vector<double>::Zero(1), 1.0);
  EXPECT_TRUE(std::isfinite(s.log_prob));
}

TEST(LogProb, RejectsActionsOnOrOutsideBoundary) {
  EXPECT_THROW(log_prob(policy1(0, 0), Vector<double>::Constant(1, 1.0)), DomainError);
  EXPECT_THROW(log_prob(policy1(0, 0), Vector<double>::Constant(1, -1.5)), DomainError);
  EXPECT_THROW(log_prob(policy1(0, 0), Vector<double>::Zero(2)), ShapeError);
  EXPECT_NEAR(log_prob(policy1(0, 0), Vector<double>::Zero(1)), -0.9189, 1e-4);
}

TEST(LogProb, DensityIntegratesToOne) {
  for (auto [mean, log_std] : {std::pair{0.0, 0.0}, {0.5, -0.7}, {-1.0, 0.3}}) {
    const auto p = policy1(mean, log_std);
    // Midpoint rule in pre-squash space: da = (1 - a^2) du avoids the endpoint spike.
    double total = 0.0;
    const double lo = -12.0, hi = 12.0;
    const int n = 200000;
    const double du = (hi - lo) / n;
    for (int i = 0; i < n; ++i) {
      const double u = lo + (i + 0.5) * du;
      const double a = std::tanh(u);
      if (std::abs(a) >= 1.0) continue;
      total += std::exp(log_prob(p, Vector<double>::Constant(1, a))) * (1 - a * a) * du;
    }
    EXPECT_NEAR(total, 1.0, 1e-3) << mean << " " << log_std;
  }
}

TEST(LogProb, MatchesMonteCarloHistogram) {
  const auto p = policy1(0.3, -0.4);
  Rng rng(21);
  const int n = 100000;
  const int bins = 20;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) {
    const double a = sample_action(p, rng, 1.0).action(0);
    counts[std::min(bins - 1, static_cast<int>((a + 1.0) / 2.0 * bins))]++;
  }
  for (int b = 0; b < bins; ++b) {
    const double lo = -1.0 + 2.0 * b / bins;
    const double width = 2.0 / bins;
    double mass = 0.0;
    const int sub = 2000;
    for (int i = 0; i < sub; ++i) {
      const double a = lo + (i + 0.5) * width / sub;
      mass += std::exp(log_prob(p, Vector<double>::Constant(1, a))) * width / sub;
    }
    const double expected = mass * n;
    const double se = std::sqrt(std::max(expected * (1 - mass), 1.0));
    EXPECT_LE(std::abs(counts[b] - expected), 3 * se + 1.0) << "bin " << b;
  }
}

TEST(DeterministicAction, TanhOfMeanIndependentOfStd) {
  EXPECT_EQ(deterministic_action(policy1(0, 0))(0), 0.0);
  EXPECT_DOUBLE_EQ(deterministic_action(policy1(10, 0))(0), 1.0 - 2.0 / (std::exp(20.0) + 1.0));
  EXPECT_NEAR(deterministic_action(policy1(10, 0))(0), 0.99999997, 5e-8);
  EXPECT_EQ(deterministic_action(policy1(0.4, -3)), deterministic_action(policy1(0.4, 1.5)));
}

TEST(PolicyOutput, LogStdClampedIntoRange) {
  const auto p = make_policy_output(Vector<double>::Zero(2), (Vector<double>(2) << -50, 9).finished());
  EXPECT_EQ(p.log_std(0), kLogStdMin);
  EXPECT_EQ(p.log_std(1), kLogStdMax);
  EXPECT_THROW(make_policy_output(Vector<double>::Zero(2), Vector<double>::Zero(3)), ShapeError);
}

TEST(KlDivergence, ClosedFormExamples) {
  EXPECT_EQ(kl_divergence(policy1(0.2, -0.3), policy1(0.2, -0.3)), 0.0);
  EXPECT_NEAR(kl_divergence(policy1(0, 0), policy1(1, 0)), 0.5, 1e-12);
  const auto p = make_policy_output((Vector<double>(2) << 0, 0.5).finished(),
                                    (Vector<double>(2) << 0, -0.2).finished());
  const auto q = make_policy_output((Vector<double>(2) << 1, -0.3).finished(),
                                    (Vector<double>(2) << 0, 0.4).finished());
  EXPECT_NEAR(kl_divergence(p, q),
              kl_divergence(policy1(0, 0), policy1(1, 0)) +
                  kl_divergence(policy1(0.5, -0.2), policy1(-0.3, 0.4)),
              1e-12);
  EXPECT_THROW(kl_divergence(policy1(0, 0), p), ShapeError);
}

TEST(KlDivergence, NonNegativeAndZeroOnlyAtEquality) {
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const auto p = policy1(rng.normal(), 0.5 * rng.normal());
    const auto q = policy1(rng.normal(), 0.5 * rng.normal());
    EXPECT_GE(kl_divergence(p, q), 0.0);
    EXPECT_GT(kl_divergence(p, q), 1e-9);
    EXPECT_LE(std::abs(kl_divergence(p, p)), 1e-9);
  }
}

TEST(KlDivergence, MatchesMonteCarloEstimate) {
  const auto p = policy1(0.2, -0.3);
  const auto q = policy1(-0.4, 0.1);
  Rng rng(12);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const auto s = sample_action(p, rng, 1.0);
    if (std::abs(s.action(0)) >= 1.0 - 1e-12) continue;
    sum += s.log_prob - log_prob(q, s.action);
  }
  EXPECT_NEAR(sum / n, kl_divergence(p, q), 0.01);
}

TEST(PolicyGradients, SquashBackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LE(oracle::squash_gradient_error(seed), 1e-3) << seed;
    EXPECT_LE(oracle::squash_gradient_error(seed + 100, 1, 3, 1.0), 1e-3) << seed;
  }
}

TEST(PolicyGradients, KlGradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LE(oracle::kl_gradient_error(seed), 1e-3) << seed;
  }
}

TEST(PolicyGradients, ActorObjectiveThroughCriticMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    EXPECT_LE(oracle::actor_objective_gradient_error(seed), 1e-3) << seed;
  }
}

TEST(PolicyGradients, ClampBlocksLogStdGradient) {
  Matrix<double> out(2, 3);
  out << 0.1, 0.2, 0.3, -25.0, 0.0, 5.0;
  const auto head = PolicyBatch<double>::from_network_output(out, 1);
  const Matrix<double> g = head.output_gradient(Matrix<double>::Ones(1, 3), Matrix<double>::Ones(1, 3));
  EXPECT_EQ(g(1, 0), 0.0);
  EXPECT_EQ(g(1, 1), 1.0);
  EXPECT_EQ(g(1, 2), 0.0);
  EXPECT_TRUE((g.row(0).array() == 1.0).all());
}

TEST(PolicyBatch, MatchesSingleSampleApi) {
  Rng rng(3);
  const Matrix<double> out = oracle::random_matrix(4, 6, rng);
  const Matrix<double> noise = oracle::random_matrix(2, 6, rng);
  const auto head = PolicyBatch<double>::from_network_output(out, 2);
  const auto s = squash_batch<double>(head, noise, 0.75);
  for (Eigen::Index j = 0; j < 6; ++j) {
    const auto p = make_policy_output(out.col(j).head(2), out.col(j).tail(2));
    const auto single = squash_noise(p, noise.col(j), 0.75);
    EXPECT_NEAR(single.log_prob, s.log_prob(j), 1e-12);
    EXPECT_LE((single.action - s.action.col(j)).cwiseAbs().maxCoeff(), 1e-15);
  }
}
