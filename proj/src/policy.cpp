#include "bro/policy.hpp"

#include "bro/errors.hpp"

namespace bro {

GaussianPolicyOutput make_policy_output(Vector<double> mean, const Vector<double>& raw_log_std) {
  require_shape(mean.size() == raw_log_std.size(), "mean and log_std lengths differ");
  return {std::move(mean), raw_log_std.unaryExpr([](double v) { return policy_math::clamp_log_std(v); })};
}

SquashedAction squash_noise(const GaussianPolicyOutput& p, const Vector<double>& noise,
                            double std_multiplier) {
  require_domain(std_multiplier > 0.0, "std_multiplier must be positive");
  require_shape(p.mean.size() == p.log_std.size() && noise.size() == p.mean.size(),
                "policy and noise dimensions differ");
  PolicyBatch<double> batch{p.mean, p.log_std, p.log_std};
  const auto squashed = squash_batch<double>(batch, noise, std_multiplier);
  return {squashed.action.col(0), squashed.pre_squash.col(0), squashed.log_prob(0)};
}

SquashedAction sample_action(const GaussianPolicyOutput& p, Rng& rng, double std_multiplier) {
  Vector<double> noise(p.mean.size());
  for (auto& v : noise) v = rng.normal();
  return squash_noise(p, noise, std_multiplier);
}

double log_prob(const GaussianPolicyOutput& p, const Vector<double>& action) {
  require_shape(action.size() == p.mean.size() && p.log_std.size() == p.mean.size(),
                "action and policy dimensions differ");
  double total = 0.0;
  for (Eigen::Index i = 0; i < action.size(); ++i) {
    require_domain(std::abs(action(i)) < 1.0, "log_prob: action outside (-1, 1)");
    const double u = std::atanh(action(i));
    const double noise = (u - p.mean(i)) * std::exp(-p.log_std(i));
    total += policy_math::gaussian_log_density(noise, p.log_std(i)) -
             policy_math::squash_log_det(action(i));
  }
  return total;
}

Vector<double> deterministic_action(const GaussianPolicyOutput& p) {
  return p.mean.array().tanh().matrix();
}

double kl_divergence(const GaussianPolicyOutput& p, const GaussianPolicyOutput& q) {
  require_shape(p.mean.size() == q.mean.size() && p.log_std.size() == p.mean.size() &&
                    q.log_std.size() == q.mean.size(),
                "kl_divergence: policy dimensions differ");
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.mean.size(); ++i) {
    total += policy_math::gaussian_kl(p.mean(i), p.log_std(i), q.mean(i), q.log_std(i));
  }
  return total;
}

}  // namespace bro
