#include "bro/optim.hpp"

#include <cmath>

#include "bro/errors.hpp"

namespace bro {

void adamw_step(Vector<float>& params, const Vector<float>& grad, const Vector<float>& decay_mask,
                AdamWState& state, const AdamWConfig& config) {
  require_shape(grad.size() == params.size() && decay_mask.size() == params.size() &&
                    state.first_moment.size() == params.size() &&
                    state.second_moment.size() == params.size(),
                "adamw_step: parameter, gradient, mask and moment sizes differ");
  ++state.step;
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  state.first_moment = b1 * state.first_moment + (1.0f - b1) * grad;
  state.second_moment =
      b2 * state.second_moment + (1.0f - b2) * grad.cwiseProduct(grad);
  const double t = static_cast<double>(state.step);
  const auto bias1 = static_cast<float>(1.0 - std::pow(config.beta1, t));
  const auto bias2 = static_cast<float>(1.0 - std::pow(config.beta2, t));
  const auto lr = static_cast<float>(config.learning_rate);
  const auto eps = static_cast<float>(config.epsilon);
  const auto wd = static_cast<float>(config.weight_decay);
  params.array() -=
      lr * ((state.first_moment.array() / bias1) /
                ((state.second_moment.array() / bias2).sqrt() + eps) +
            wd * decay_mask.array() * params.array());
}

void polyak_update(const Vector<float>& online, Vector<float>& target, double rho) {
  require_shape(online.size() == target.size(), "polyak_update: online/target sizes differ");
  require_domain(rho > 0.0 && rho <= 1.0, "polyak_update: rho must lie in (0, 1]");
  if (rho == 1.0) {
    target = online;
    return;
  }
  const auto r = static_cast<float>(rho);
  target += r * (online - target);
}

}  // namespace bro
