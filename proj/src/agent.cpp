#include "bro/agent.hpp"

#include <algorithm>
#include <cmath>

#include "bro/distributional.hpp"
#include "bro/errors.hpp"

namespace bro {

std::vector<std::int64_t> default_reset_schedule() {
  return {15'000, 50'000, 250'000, 500'000, 750'000, 1'000'000};
}

void BroHyperparams::validate() const {
  require_domain(batch_size >= 1, "batch_size must be >= 1");
  require_domain(replay_ratio >= 1, "replay_ratio must be >= 1");
  require_domain(discount > 0.0 && discount <= 1.0, "discount must lie in (0, 1]");
  require_domain(polyak > 0.0 && polyak <= 1.0, "polyak must lie in (0, 1]");
  require_domain(lr_actor > 0.0 && lr_critic > 0.0 && lr_dual > 0.0,
                 "learning rates must be positive");
  require_domain(num_quantiles >= 1, "num_quantiles must be >= 1");
  require_domain(huber_kappa > 0.0, "huber_kappa must be positive");
  require_domain(kl_target > 0.0, "kl_target must be positive");
  require_domain(initial_optimism >= std::max(0.0, pessimism_floor),
                 "initial_optimism must be >= max(0, pessimism_floor)");
  require_domain(initial_kl_weight > 0.0, "initial_kl_weight must be positive");
  require_domain(std_multiplier > 0.0, "std_multiplier must be positive");
  require_domain(exploratory_steps >= 0, "exploratory_steps must be >= 0");
  require_domain(initial_temperature > 0.0, "initial_temperature must be positive");
  require_domain(weight_decay >= 0.0, "weight_decay must be >= 0");
  require_domain(std::is_sorted(reset_steps.begin(), reset_steps.end()),
                 "reset_steps must be sorted");
}

BroHyperparams bro_preset() { return {}; }

BroHyperparams bro_fast_preset() {
  BroHyperparams hp;
  hp.replay_ratio = 2;
  return hp;
}

BroNetConfig AgentSpec::actor_config() const {
  return {obs_dim, actor.hidden_size, actor.num_blocks, 2 * act_dim, actor.architecture, 0.01};
}

BroNetConfig AgentSpec::critic_config() const {
  return {obs_dim + act_dim, critic.hidden_size, critic.num_blocks, hyper.effective_quantiles(),
          critic.architecture, 1.0};
}

double AgentState::temperature() const { return std::exp(log_temperature); }

namespace dual {

double temperature_step(double log_temperature, double entropy, double target_entropy, double lr) {
  return log_temperature - lr * std::exp(log_temperature) * (entropy - target_entropy);
}

double optimism_step(double optimism, double pessimism_floor, double kl_per_dim, double kl_target,
                     double lr) {
  return std::max(optimism - lr * (kl_per_dim - kl_target), std::max(0.0, pessimism_floor));
}

double kl_weight_step(double kl_weight, double kl_per_dim, double kl_target, double lr) {
  return std::max(kl_weight + lr * (kl_per_dim - kl_target), kMinKlWeight);
}

}  // namespace dual

namespace {

// Row-vector of per-sample ensemble means (1/2K) sum_k (q1 + q2).
RowArray<float> ensemble_mean(const Matrix<float>& q1, const Matrix<float>& q2) {
  return 0.5f * (q1.colwise().mean() + q2.colwise().mean()).array();
}

double grad_norm(const Vector<float>& g) { return std::sqrt(g.cast<double>().squaredNorm()); }

}  // namespace

BroAgent::BroAgent(AgentSpec spec)
    : spec_(std::move(spec)),
      actor_net_(spec_.actor_config()),
      critic_net_(spec_.critic_config()),
      actor_mask_(weight_decay_mask<float>(spec_.actor_config())),
      critic_mask_(weight_decay_mask<float>(spec_.critic_config())),
      levels_(bro::quantile_levels(spec_.hyper.effective_quantiles()).cast<float>()) {
  require_shape(spec_.obs_dim >= 1 && spec_.act_dim >= 1, "obs_dim and act_dim must be >= 1");
  spec_.hyper.validate();
}

BroNetParams<float> BroAgent::fresh_network(std::uint64_t seed, std::int64_t env_step,
                                            NetworkId id) const {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(env_step), static_cast<std::uint64_t>(id)));
  const bool actor = id == NetworkId::pessimistic_actor || id == NetworkId::optimistic_actor;
  return init_bronet<float>(actor ? spec_.actor_config() : spec_.critic_config(), rng);
}

void BroAgent::reset_parameters(AgentState& state) const {
  auto fresh = [&](NetworkId id) {
    TrainableNetwork net{fresh_network(state.seed, state.env_step, id), {}};
    net.optimizer = AdamWState::zeros(net.params.values.size());
    return net;
  };
  state.pessimistic_actor = fresh(NetworkId::pessimistic_actor);
  state.optimistic_actor = fresh(NetworkId::optimistic_actor);
  state.critic1 = fresh(NetworkId::critic1);
  state.critic2 = fresh(NetworkId::critic2);
  state.target_critic1 = state.critic1.params;
  state.target_critic2 = state.critic2.params;
  state.log_temperature = std::log(spec_.hyper.initial_temperature);
  state.optimism = spec_.hyper.initial_optimism;
  state.kl_weight = spec_.hyper.initial_kl_weight;
}

AgentState BroAgent::initial_state(std::uint64_t seed) const {
  AgentState state;
  state.seed = seed;
  state.rng = Rng(derive_seed(seed, 0xA6E27ULL));
  reset_parameters(state);
  return state;
}

bool BroAgent::maybe_reset(AgentState& state) const {
  if (!spec_.hyper.toggles.use_resets) return false;
  const auto& steps = spec_.hyper.reset_steps;
  if (!std::binary_search(steps.begin(), steps.end(), state.env_step)) return false;
  reset_parameters(state);
  return true;
}

Matrix<float> BroAgent::critic_input(const Matrix<float>& obs, const Matrix<float>& action) const {
  require_shape(obs.rows() == spec_.obs_dim && action.rows() == spec_.act_dim &&
                    obs.cols() == action.cols(),
                "critic input: observation/action shapes do not match the agent");
  Matrix<float> in(obs.rows() + action.rows(), obs.cols());
  in << obs, action;
  return in;
}

Matrix<float> BroAgent::gaussian_noise(Rng& rng, Eigen::Index cols) const {
  Matrix<float> noise(spec_.act_dim, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = static_cast<float>(rng.normal());
  }
  return noise;
}

AdamWConfig BroAgent::optimizer_config(double lr) const {
  AdamWConfig config;
  config.learning_rate = lr;
  config.weight_decay = spec_.hyper.toggles.use_weight_decay ? spec_.hyper.weight_decay : 0.0;
  return config;
}

PolicyBatch<float> BroAgent::policy_batch(const BroNetParams<float>& actor,
                                          const Matrix<float>& obs) const {
  return PolicyBatch<float>::from_network_output(actor_net_.forward(actor, obs), spec_.act_dim);
}

GaussianPolicyOutput BroAgent::policy_output(const BroNetParams<float>& actor,
                                             const Vector<double>& obs) const {
  require_shape(obs.size() == spec_.obs_dim, "observation width does not match the agent");
  require_domain(obs.allFinite(), "observation contains non-finite values");
  const Matrix<float> out = actor_net_.forward(actor, obs.cast<float>());
  return make_policy_output(out.topRows(spec_.act_dim).col(0).cast<double>(),
                            out.bottomRows(spec_.act_dim).col(0).cast<double>());
}

Vector<double> BroAgent::deterministic_action(const AgentState& state,
                                              const Vector<double>& obs) const {
  return bro::deterministic_action(policy_output(state.pessimistic_actor.params, obs));
}

Vector<double> BroAgent::select_action(AgentState& state, const Vector<double>& obs,
                                       ActionMode mode) const {
  require_shape(obs.size() == spec_.obs_dim, "observation width does not match the agent");
  require_domain(obs.allFinite(), "observation contains non-finite values");
  if (mode == ActionMode::evaluate) return deterministic_action(state, obs);
  if (state.env_step < spec_.hyper.exploratory_steps) {
    Vector<double> action(spec_.act_dim);
    for (auto& v : action) v = state.rng.uniform(-1.0, 1.0);
    return action;
  }
  if (spec_.hyper.toggles.use_dual_actor) {
    return sample_action(policy_output(state.optimistic_actor.params, obs), state.rng,
                         spec_.hyper.std_multiplier)
        .action;
  }
  return sample_action(policy_output(state.pessimistic_actor.params, obs), state.rng, 1.0).action;
}

Matrix<float> BroAgent::critic_quantiles(const BroNetParams<float>& critic,
                                         const Matrix<float>& obs,
                                         const Matrix<float>& action) const {
  return critic_net_.forward(critic, critic_input(obs, action));
}

Matrix<float> BroAgent::compute_critic_target(const AgentState& state,
                                              const TransitionBatch& batch,
                                              const Matrix<float>& next_noise) const {
  const auto& toggles = spec_.hyper.toggles;
  const PolicyBatch<float> next_policy = policy_batch(state.pessimistic_actor.params, batch.next_obs);
  const SquashedBatch<float> next = squash_batch<float>(next_policy, next_noise, 1.0f);
  const Matrix<float> in = critic_input(batch.next_obs, next.action);
  const auto& source1 = toggles.use_target_network ? state.target_critic1 : state.critic1.params;
  const auto& source2 = toggles.use_target_network ? state.target_critic2 : state.critic2.params;
  const Matrix<float> q1 = critic_net_.forward(source1, in);
  const Matrix<float> q2 = critic_net_.forward(source2, in);
  const Matrix<float> combined = toggles.use_cdq ? Matrix<float>(q1.cwiseMin(q2))
                                                 : Matrix<float>(0.5f * (q1 + q2));
  return critic_target_from<float>(batch.reward, batch.terminated, combined, next.log_prob,
                                   static_cast<float>(state.temperature()),
                                   static_cast<float>(spec_.hyper.discount));
}

Matrix<float> BroAgent::compute_critic_target(AgentState& state,
                                              const TransitionBatch& batch) const {
  const Matrix<float> noise = gaussian_noise(state.rng, batch.size());
  return compute_critic_target(static_cast<const AgentState&>(state), batch, noise);
}

CriticUpdate BroAgent::fit_critics(AgentState& state, const TransitionBatch& batch,
                                   const Matrix<float>& targets) const {
  require_shape(targets.cols() == batch.size(), "targets and batch sizes differ");
  const Matrix<float> in = critic_input(batch.obs, batch.action);
  ForwardCache<float> cache1;
  ForwardCache<float> cache2;
  const Matrix<float> q1 = critic_net_.forward(state.critic1.params, in, cache1);
  const Matrix<float> q2 = critic_net_.forward(state.critic2.params, in, cache2);
  const auto kappa = static_cast<float>(spec_.hyper.huber_kappa);
  Matrix<float> grad_q1;
  Matrix<float> grad_q2;
  const float loss1 = quantile_huber_loss_batch<float>(q1, targets, levels_, kappa, &grad_q1);
  const float loss2 = quantile_huber_loss_batch<float>(q2, targets, levels_, kappa, &grad_q2);

  CriticUpdate update;
  update.loss = static_cast<double>(loss1) + static_cast<double>(loss2);
  const RowArray<float> q_mean = ensemble_mean(q1, q2);
  update.mean_q = q_mean.cast<double>().mean();
  update.td_error =
      (targets.colwise().mean().array() - q_mean).abs().cast<double>().mean();
  if (!std::isfinite(update.loss)) {
    state.diverged = true;
    return update;
  }
  Vector<float> grad1;
  Vector<float> grad2;
  critic_net_.backward(state.critic1.params, cache1, grad_q1, &grad1, nullptr);
  critic_net_.backward(state.critic2.params, cache2, grad_q2, &grad2, nullptr);
  update.grad_norm = std::sqrt(grad1.cast<double>().squaredNorm() + grad2.cast<double>().squaredNorm());
  if (!std::isfinite(update.grad_norm)) {
    state.diverged = true;
    return update;
  }
  const AdamWConfig config = optimizer_config(spec_.hyper.lr_critic);
  adamw_step(state.critic1.params.values, grad1, critic_mask_, state.critic1.optimizer, config);
  adamw_step(state.critic2.params.values, grad2, critic_mask_, state.critic2.optimizer, config);
  update.applied = true;
  return update;
}

CriticUpdate BroAgent::update_critics(AgentState& state, const TransitionBatch& batch) const {
  const Matrix<float> targets = compute_critic_target(state, batch);
  return fit_critics(state, batch, targets);
}

ActorUpdate BroAgent::update_pessimistic_actor(AgentState& state,
                                               const TransitionBatch& batch) const {
  const Eigen::Index n = batch.size();
  const Eigen::Index k = levels_.size();
  ForwardCache<float> actor_cache;
  const PolicyBatch<float> policy = PolicyBatch<float>::from_network_output(
      actor_net_.forward(state.pessimistic_actor.params, batch.obs, actor_cache), spec_.act_dim);
  const Matrix<float> noise = gaussian_noise(state.rng, n);
  const SquashedBatch<float> sample = squash_batch<float>(policy, noise, 1.0f);

  const Matrix<float> in = critic_input(batch.obs, sample.action);
  ForwardCache<float> cache1;
  ForwardCache<float> cache2;
  const Matrix<float> q1 = critic_net_.forward(state.critic1.params, in, cache1);
  const Matrix<float> q2 = critic_net_.forward(state.critic2.params, in, cache2);
  const auto alpha = static_cast<float>(state.temperature());

  ActorUpdate update;
  const RowArray<float> q_mean = ensemble_mean(q1, q2);
  update.objective = (q_mean - alpha * sample.log_prob).cast<double>().mean();
  update.entropy = -sample.log_prob.cast<double>().mean();
  if (!std::isfinite(update.objective)) {
    state.diverged = true;
    return update;
  }

  // loss = -mean_b [Qmu(s, a) - alpha log pi(a|s)]
  const Matrix<float> grad_q = Matrix<float>::Constant(k, n, -1.0f / (2.0f * k * n));
  Matrix<float> grad_in1;
  Matrix<float> grad_in2;
  critic_net_.backward(state.critic1.params, cache1, grad_q, nullptr, &grad_in1);
  critic_net_.backward(state.critic2.params, cache2, grad_q, nullptr, &grad_in2);
  const Matrix<float> grad_action =
      grad_in1.bottomRows(spec_.act_dim) + grad_in2.bottomRows(spec_.act_dim);

  const RowArray<float> grad_log_prob =
      RowArray<float>::Constant(n, alpha / static_cast<float>(n));
  const PolicyGradient<float> g =
      squash_backward<float>(policy, noise, 1.0f, sample, grad_action, grad_log_prob);
  const Matrix<float> grad_out = policy.output_gradient(g.mean, g.log_std);

  Vector<float> grad;
  actor_net_.backward(state.pessimistic_actor.params, actor_cache, grad_out, &grad, nullptr);
  update.grad_norm = grad_norm(grad);
  if (!std::isfinite(update.grad_norm)) {
    state.diverged = true;
    return update;
  }
  adamw_step(state.pessimistic_actor.params.values, grad, actor_mask_,
             state.pessimistic_actor.optimizer, optimizer_config(spec_.hyper.lr_actor));
  update.applied = true;
  return update;
}

OptimisticActorUpdate BroAgent::update_optimistic_actor(AgentState& state,
                                                        const TransitionBatch& batch) const {
  const Eigen::Index n = batch.size();
  const Eigen::Index k = levels_.size();
  const Eigen::Index act = spec_.act_dim;
  const PolicyBatch<float> pessimistic = policy_batch(state.pessimistic_actor.params, batch.obs);
  ForwardCache<float> actor_cache;
  const PolicyBatch<float> policy = PolicyBatch<float>::from_network_output(
      actor_net_.forward(state.optimistic_actor.params, batch.obs, actor_cache), act);
  const Matrix<float> noise = gaussian_noise(state.rng, n);
  const SquashedBatch<float> sample = squash_batch<float>(policy, noise, 1.0f);

  const Matrix<float> in = critic_input(batch.obs, sample.action);
  ForwardCache<float> cache1;
  ForwardCache<float> cache2;
  const Matrix<float> q1 = critic_net_.forward(state.critic1.params, in, cache1);
  const Matrix<float> q2 = critic_net_.forward(state.critic2.params, in, cache2);
  const auto beta = static_cast<float>(state.optimism);
  const auto tau = static_cast<float>(state.kl_weight);

  // Per-sample KL(pi_p || pi_o) and its gradient with respect to pi_o's head.
  PolicyGradient<float> grad_kl;
  const RowArray<float> kl = gaussian_kl_batch<float>(pessimistic, policy, &grad_kl);

  OptimisticActorUpdate update;
  update.measured_kl = kl.cast<double>().mean();
  const Matrix<float> spread = q1 - q2;
  const RowArray<float> bonus = 0.5f * spread.array().abs().colwise().mean();
  update.objective =
      (ensemble_mean(q1, q2) + beta * bonus - tau * kl).cast<double>().mean();
  if (!std::isfinite(update.objective)) {
    state.diverged = true;
    return update;
  }

  // loss = -mean_b [ (1/2K) sum_k (q1 + q2 + beta |q1 - q2|) - tau KL ]
  const float scale = -1.0f / (2.0f * k * n);
  const Eigen::ArrayXXf sign = spread.array().sign();
  const Matrix<float> grad_q1 = (scale * (1.0f + beta * sign)).matrix();
  const Matrix<float> grad_q2 = (scale * (1.0f - beta * sign)).matrix();
  Matrix<float> grad_in1;
  Matrix<float> grad_in2;
  critic_net_.backward(state.critic1.params, cache1, grad_q1, nullptr, &grad_in1);
  critic_net_.backward(state.critic2.params, cache2, grad_q2, nullptr, &grad_in2);
  const Matrix<float> grad_action = grad_in1.bottomRows(act) + grad_in2.bottomRows(act);

  PolicyGradient<float> g = squash_backward<float>(policy, noise, 1.0f, sample, grad_action,
                                                   RowArray<float>::Zero(n));
  const float kl_scale = tau / static_cast<float>(n);
  g.mean += kl_scale * grad_kl.mean;
  g.log_std += kl_scale * grad_kl.log_std;
  const Matrix<float> grad_out = policy.output_gradient(g.mean, g.log_std);

  Vector<float> grad;
  actor_net_.backward(state.optimistic_actor.params, actor_cache, grad_out, &grad, nullptr);
  update.grad_norm = grad_norm(grad);
  if (!std::isfinite(update.grad_norm)) {
    state.diverged = true;
    return update;
  }
  adamw_step(state.optimistic_actor.params.values, grad, actor_mask_,
             state.optimistic_actor.optimizer, optimizer_config(spec_.hyper.lr_actor));
  update.applied = true;
  return update;
}

void BroAgent::update_temperature(AgentState& state, double entropy) const {
  state.log_temperature = dual::temperature_step(state.log_temperature, entropy,
                                                 spec_.target_entropy(), spec_.hyper.lr_dual);
}

void BroAgent::update_optimism(AgentState& state, double measured_kl) const {
  state.optimism = dual::optimism_step(state.optimism, spec_.hyper.pessimism_floor,
                                       measured_kl / spec_.act_dim, spec_.hyper.kl_target,
                                       spec_.hyper.lr_dual);
}

void BroAgent::update_kl_weight(AgentState& state, double measured_kl) const {
  state.kl_weight = dual::kl_weight_step(state.kl_weight, measured_kl / spec_.act_dim,
                                         spec_.hyper.kl_target, spec_.hyper.lr_dual);
}

void BroAgent::update_targets(AgentState& state) const {
  polyak_update(state.critic1.params.values, state.target_critic1.values, spec_.hyper.polyak);
  polyak_update(state.critic2.params.values, state.target_critic2.values, spec_.hyper.polyak);
}

std::vector<DiagnosticRow> BroAgent::train_step(AgentState& state,
                                                const ReplayBuffer& buffer) const {
  const auto& hp = spec_.hyper;
  std::vector<DiagnosticRow> rows;
  if (buffer.size() < static_cast<std::size_t>(hp.batch_size)) {
    DiagnosticRow row;
    row.skipped = true;
    row.warning = "replay buffer holds fewer transitions than batch_size; update skipped";
    rows.push_back(row);
    return rows;
  }
  rows.reserve(static_cast<std::size_t>(hp.replay_ratio));
  for (int i = 0; i < hp.replay_ratio; ++i) {
    if (state.diverged) break;
    const TransitionBatch batch = buffer.sample(static_cast<std::size_t>(hp.batch_size), state.rng);
    DiagnosticRow row;
    const CriticUpdate critic = update_critics(state, batch);
    row.critic_loss = critic.loss;
    row.td_error = critic.td_error;
    row.mean_q = critic.mean_q;
    row.critic_grad_norm = critic.grad_norm;
    if (!state.diverged) {
      const ActorUpdate actor = update_pessimistic_actor(state, batch);
      row.actor_grad_norm = actor.grad_norm;
      row.entropy = actor.entropy;
      if (!state.diverged && hp.toggles.use_dual_actor) {
        const OptimisticActorUpdate optimistic = update_optimistic_actor(state, batch);
        row.optimistic_actor_grad_norm = optimistic.grad_norm;
        row.measured_kl = optimistic.measured_kl;
      }
      if (!state.diverged) {
        update_temperature(state, actor.entropy);
        if (hp.toggles.use_dual_actor) {
          update_optimism(state, row.measured_kl);
          update_kl_weight(state, row.measured_kl);
        }
        if (hp.toggles.use_target_network) update_targets(state);
      }
    }
    row.temperature = state.temperature();
    row.optimism = state.optimism;
    row.kl_weight = state.kl_weight;
    if (state.diverged) row.warning = "non-finite loss or gradient; step aborted";
    ++state.gradient_step;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace bro
