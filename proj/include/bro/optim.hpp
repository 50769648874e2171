#pragma once

#include <cstdint>

#include "bro/networks.hpp"

namespace bro {

struct AdamWConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// First/second moment estimates for one flat parameter group.
struct AdamWState {
  Vector<float> first_moment;
  Vector<float> second_moment;
  std::int64_t step = 0;

  static AdamWState zeros(Eigen::Index size) {
    return {Vector<float>::Zero(size), Vector<float>::Zero(size), 0};
  }
  bool operator==(const AdamWState& other) const {
    return step == other.step && first_moment == other.first_moment &&
           second_moment == other.second_moment;
  }
};

// Adaptive-moment step with decoupled weight decay:
//   p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * mask * p)
// The mask selects which entries decay (dense weights only).
void adamw_step(Vector<float>& params, const Vector<float>& grad, const Vector<float>& decay_mask,
                AdamWState& state, const AdamWConfig& config);

// target <- (1 - rho) * target + rho * online, evaluated as target + rho * (online - target)
// so a target equal to online stays bitwise unchanged.
void polyak_update(const Vector<float>& online, Vector<float>& target, double rho);

}  // namespace bro
