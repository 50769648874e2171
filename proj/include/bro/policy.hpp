#pragma once

// Tanh-squashed diagonal Gaussian policy heads.
//
// An actor network emits 2|A| rows per sample: the first |A| are the Gaussian
// mean, the last |A| the unclamped log standard deviation.

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bro/networks.hpp"
#include "bro/rng.hpp"

namespace bro {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
// Guard inside log(1 - tanh(u)^2 + eps) of the change-of-variables term.
inline constexpr double kSquashEpsilon = 1e-6;

struct GaussianPolicyOutput {
  Vector<double> mean;
  Vector<double> log_std;  // already clamped to [kLogStdMin, kLogStdMax]
};

struct SquashedAction {
  Vector<double> action;
  Vector<double> pre_squash;
  double log_prob = 0.0;
};

// Builds a policy output, clamping log_std into range.
GaussianPolicyOutput make_policy_output(Vector<double> mean, const Vector<double>& raw_log_std);

// Draws u ~ N(mean, (multiplier * std)^2) and squashes it.
SquashedAction sample_action(const GaussianPolicyOutput& p, Rng& rng, double std_multiplier);
// Same as sample_action with an explicit standard-normal noise vector.
SquashedAction squash_noise(const GaussianPolicyOutput& p, const Vector<double>& noise,
                            double std_multiplier);

// Log-density (nats) of the squashed policy at `action`; throws DomainError
// unless every |action_i| < 1.
double log_prob(const GaussianPolicyOutput& p, const Vector<double>& action);

Vector<double> deterministic_action(const GaussianPolicyOutput& p);

// KL(p || q) of the pre-squash Gaussians (equal to the squashed KL since tanh
// is a shared bijection).
double kl_divergence(const GaussianPolicyOutput& p, const GaussianPolicyOutput& q);

// Elementwise kernels shared by the single-sample API and the batched agent code.
namespace policy_math {

inline constexpr double kHalfLogTwoPi = 0.91893853320467274178;

template <class T>
T clamp_log_std(T raw) {
  return std::clamp(raw, T(kLogStdMin), T(kLogStdMax));
}

// log(1 - tanh(u)^2 + eps) given the squashed action a = tanh(u).
template <class T>
T squash_log_det(T action) {
  return std::log(T(1) - action * action + T(kSquashEpsilon));
}

// log N(u; mean, sigma^2) where u = mean + sigma * noise and log_sigma = log(sigma).
template <class T>
T gaussian_log_density(T noise, T log_sigma) {
  return T(-0.5) * noise * noise - log_sigma - T(kHalfLogTwoPi);
}

// One dimension of KL(N(mp, sp^2) || N(mq, sq^2)) in log-std parameters.
template <class T>
T gaussian_kl(T mean_p, T log_std_p, T mean_q, T log_std_q) {
  const T var_ratio = std::exp(T(2) * (log_std_p - log_std_q));
  const T diff = mean_p - mean_q;
  return log_std_q - log_std_p + T(0.5) * (var_ratio + diff * diff * std::exp(T(-2) * log_std_q)) -
         T(0.5);
}

}  // namespace policy_math

// Batched policy head: columns are samples.
template <class T>
struct PolicyBatch {
  Matrix<T> mean;
  Matrix<T> log_std;      // clamped
  Matrix<T> log_std_raw;  // network output before clamping

  static PolicyBatch from_network_output(const Matrix<T>& out, Eigen::Index action_dim) {
    PolicyBatch batch;
    batch.mean = out.topRows(action_dim);
    batch.log_std_raw = out.bottomRows(action_dim);
    batch.log_std = batch.log_std_raw.unaryExpr([](T v) { return policy_math::clamp_log_std(v); });
    return batch;
  }

  // dJ/d(network output) given dJ/dmean and dJ/dlog_std (clamped); the
  // clamp passes gradient only where it is inactive.
  Matrix<T> output_gradient(const Matrix<T>& grad_mean, const Matrix<T>& grad_log_std) const {
    Matrix<T> out(2 * mean.rows(), mean.cols());
    out.topRows(mean.rows()) = grad_mean;
    out.bottomRows(mean.rows()) = (grad_log_std.array() * log_std_pass_mask().array()).matrix();
    return out;
  }

  // 1 where the clamp is inactive (gradient passes), 0 otherwise.
  Matrix<T> log_std_pass_mask() const {
    return ((log_std_raw.array() >= T(kLogStdMin)) && (log_std_raw.array() <= T(kLogStdMax)))
        .template cast<T>()
        .matrix();
  }
};

template <class T>
struct SquashedBatch {
  Matrix<T> pre_squash;
  Matrix<T> action;
  RowArray<T> log_prob;
};

// Reparameterized squashed sample: u = mean + multiplier * exp(log_std) * noise.
template <class T>
SquashedBatch<T> squash_batch(const PolicyBatch<T>& p, const Matrix<T>& noise, T std_multiplier) {
  SquashedBatch<T> out;
  const Matrix<T> sigma = (p.log_std.array().exp() * std_multiplier).matrix();
  out.pre_squash = p.mean + (sigma.array() * noise.array()).matrix();
  out.action = out.pre_squash.array().tanh().matrix();
  const T log_mult = std::log(std_multiplier);
  out.log_prob = RowArray<T>::Zero(p.mean.cols());
  for (Eigen::Index j = 0; j < p.mean.cols(); ++j) {
    T total = T(0);
    for (Eigen::Index i = 0; i < p.mean.rows(); ++i) {
      total += policy_math::gaussian_log_density(noise(i, j), p.log_std(i, j) + log_mult) -
               policy_math::squash_log_det(out.action(i, j));
    }
    out.log_prob(j) = total;
  }
  return out;
}

// Gradients with respect to the policy head (mean and clamped log_std).
template <class T>
struct PolicyGradient {
  Matrix<T> mean;
  Matrix<T> log_std;
};

// Backpropagates dJ/daction [A x B] and dJ/dlog_prob [B] through
// squash_batch for a fixed noise draw:
//   dlog_prob/du = 2a(1 - a^2) / (1 - a^2 + eps),  du/dlog_std = multiplier * sigma * noise,
//   and log_prob carries a direct -1 per dimension in log_std.
template <class T>
PolicyGradient<T> squash_backward(const PolicyBatch<T>& p, const Matrix<T>& noise, T std_multiplier,
                                  const SquashedBatch<T>& s, const Matrix<T>& grad_action,
                                  const RowArray<T>& grad_log_prob) {
  const auto a = s.action.array();
  const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic> one_minus_sq = T(1) - a.square();
  Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic> dlogp_du =
      T(2) * a * one_minus_sq / (one_minus_sq + T(kSquashEpsilon));
  dlogp_du.rowwise() *= grad_log_prob;
  const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic> grad_u =
      grad_action.array() * one_minus_sq + dlogp_du;
  PolicyGradient<T> g;
  g.mean = grad_u.matrix();
  Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic> grad_log_std =
      grad_u * p.log_std.array().exp() * std_multiplier * noise.array();
  grad_log_std.rowwise() -= grad_log_prob;
  g.log_std = grad_log_std.matrix();
  return g;
}

// Per-sample KL(p || q) of the pre-squash Gaussians, summed over action
// dimensions. Optionally writes dKL/dmean_q and dKL/dlog_std_q.
template <class T>
RowArray<T> gaussian_kl_batch(const PolicyBatch<T>& p, const PolicyBatch<T>& q,
                              PolicyGradient<T>* grad_q) {
  const Eigen::Index act = p.mean.rows();
  const Eigen::Index n = p.mean.cols();
  RowArray<T> kl = RowArray<T>::Zero(n);
  if (grad_q != nullptr) {
    grad_q->mean.resize(act, n);
    grad_q->log_std.resize(act, n);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < act; ++i) {
      const T mp = p.mean(i, j);
      const T lp = p.log_std(i, j);
      const T mq = q.mean(i, j);
      const T lq = q.log_std(i, j);
      kl(j) += policy_math::gaussian_kl(mp, lp, mq, lq);
      if (grad_q != nullptr) {
        const T inv_var_q = std::exp(T(-2) * lq);
        const T diff = mq - mp;
        grad_q->mean(i, j) = diff * inv_var_q;
        grad_q->log_std(i, j) = T(1) - (std::exp(T(2) * lp) + diff * diff) * inv_var_q;
      }
    }
  }
  return kl;
}

}  // namespace bro
