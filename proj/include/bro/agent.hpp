#pragma once

// The BRO agent: dual (pessimistic / optimistic) squashed-Gaussian actors,
// two quantile critics with Polyak targets, and three dual variables
// (entropy temperature, optimism, KL weight). AgentState is a plain value;
// BroAgent holds only the static configuration and evaluators, and every
// update mutates the state passed in.

#include <cstdint>
#include <string>
#include <vector>

#include "bro/networks.hpp"
#include "bro/optim.hpp"
#include "bro/policy.hpp"
#include "bro/replay.hpp"
#include "bro/rng.hpp"

namespace bro {

// Full-parameter resets at 15k, 50k and every 250k steps up to 1M.
std::vector<std::int64_t> default_reset_schedule();

struct AblationToggles {
  bool use_cdq = false;
  bool use_dual_actor = true;
  bool use_quantiles = true;
  bool use_weight_decay = true;
  bool use_target_network = true;
  bool use_resets = true;

  bool operator==(const AblationToggles&) const = default;
};

struct BroHyperparams {
  int batch_size = 128;
  int replay_ratio = 10;
  double discount = 0.99;
  double polyak = 0.005;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  // Step size of the temperature, optimism and KL-weight updates.
  double lr_dual = 3e-4;
  int num_quantiles = 100;
  double huber_kappa = 1.0;
  double kl_target = 0.05;
  double initial_optimism = 1.0;
  double initial_kl_weight = 1.0;
  double std_multiplier = 0.75;
  // H* = target_entropy_per_dim * |A|.
  double target_entropy_per_dim = -0.5;
  int exploratory_steps = 2500;
  double initial_temperature = 1.0;
  double weight_decay = 1e-2;
  // Lower bound beta^p for the optimism coefficient (floored at 0).
  double pessimism_floor = 0.0;
  std::vector<std::int64_t> reset_steps = default_reset_schedule();
  AblationToggles toggles;

  // Throws DomainError on out-of-range values.
  void validate() const;
  // K actually used by the critics: 1 when quantiles are ablated.
  int effective_quantiles() const { return toggles.use_quantiles ? num_quantiles : 1; }

  bool operator==(const BroHyperparams&) const = default;
};

BroHyperparams bro_preset();       // replay ratio 10
BroHyperparams bro_fast_preset();  // replay ratio 2

struct NetworkShape {
  int num_blocks = 1;
  int hidden_size = 256;
  Architecture architecture = Architecture::bronet;

  bool operator==(const NetworkShape&) const = default;
};

struct AgentSpec {
  int obs_dim = 1;
  int act_dim = 1;
  BroHyperparams hyper;
  NetworkShape actor{1, 256, Architecture::bronet};
  NetworkShape critic{2, 512, Architecture::bronet};

  BroNetConfig actor_config() const;
  BroNetConfig critic_config() const;
  double target_entropy() const { return hyper.target_entropy_per_dim * act_dim; }
};

struct TrainableNetwork {
  BroNetParams<float> params;
  AdamWState optimizer;

  bool operator==(const TrainableNetwork&) const = default;
};

// Ids used to derive per-network initialization seeds.
enum class NetworkId : std::uint64_t {
  pessimistic_actor = 1,
  optimistic_actor = 2,
  critic1 = 3,
  critic2 = 4,
};

struct AgentState {
  std::uint64_t seed = 0;
  TrainableNetwork pessimistic_actor;
  TrainableNetwork optimistic_actor;
  TrainableNetwork critic1;
  TrainableNetwork critic2;
  BroNetParams<float> target_critic1;
  BroNetParams<float> target_critic2;
  double log_temperature = 0.0;
  double optimism = 1.0;
  double kl_weight = 1.0;
  std::int64_t env_step = 0;
  std::int64_t gradient_step = 0;
  Rng rng{0};
  bool diverged = false;

  double temperature() const;
  bool operator==(const AgentState&) const = default;
};

// Per-gradient-step diagnostics.
struct DiagnosticRow {
  double td_error = 0.0;
  double critic_loss = 0.0;
  double mean_q = 0.0;
  double critic_grad_norm = 0.0;
  double actor_grad_norm = 0.0;
  double optimistic_actor_grad_norm = 0.0;
  double temperature = 0.0;
  double optimism = 0.0;
  double kl_weight = 0.0;
  double measured_kl = 0.0;
  double entropy = 0.0;
  // True when train_step could not run because the buffer is too small.
  bool skipped = false;
  // Human-readable reason for a skipped or aborted step.
  std::string warning;
};

struct CriticUpdate {
  double loss = 0.0;
  double td_error = 0.0;
  double mean_q = 0.0;
  double grad_norm = 0.0;
  bool applied = false;
};

struct ActorUpdate {
  double objective = 0.0;
  double grad_norm = 0.0;
  // -mean log pi of the fresh samples drawn for this update.
  double entropy = 0.0;
  bool applied = false;
};

struct OptimisticActorUpdate {
  double objective = 0.0;
  double grad_norm = 0.0;
  // Batch mean of KL(pi_p(s) || pi_o(s)) before the step, summed over action dims.
  double measured_kl = 0.0;
  bool applied = false;
};

enum class ActionMode { explore, evaluate };

// Pure dual-variable and target formulas (no state), shared with tests.
namespace dual {

// log alpha <- log alpha - lr * alpha * (entropy - target_entropy)
double temperature_step(double log_temperature, double entropy, double target_entropy, double lr);
// beta <- max(beta - lr * (kl_per_dim - kl_target), max(0, floor))
double optimism_step(double optimism, double pessimism_floor, double kl_per_dim, double kl_target,
                     double lr);
// tau <- max(tau + lr * (kl_per_dim - kl_target), kMinKlWeight)
double kl_weight_step(double kl_weight, double kl_per_dim, double kl_target, double lr);

inline constexpr double kMinKlWeight = 1e-6;

}  // namespace dual

// y[k, b] = r_b + discount * (1 - terminated_b) * (next_quantiles[k, b] - alpha * next_log_prob_b)
template <class T>
Matrix<T> critic_target_from(const RowArray<T>& reward, const RowArray<T>& terminated,
                             const Matrix<T>& next_quantiles, const RowArray<T>& next_log_prob,
                             T temperature, T discount) {
  Matrix<T> y = next_quantiles;
  y.array().rowwise() -= temperature * next_log_prob;
  y.array().rowwise() *= discount * (T(1) - terminated);
  y.array().rowwise() += reward;
  return y;
}

class BroAgent {
 public:
  explicit BroAgent(AgentSpec spec);

  const AgentSpec& spec() const { return spec_; }
  const BroNet<float>& actor_net() const { return actor_net_; }
  const BroNet<float>& critic_net() const { return critic_net_; }
  const Vector<float>& quantile_levels() const { return levels_; }

  AgentState initial_state(std::uint64_t seed) const;

  // explore: uniform in [-1, 1]^|A| during warm-up, then a sample of the
  // optimistic actor with std_multiplier (pessimistic actor, multiplier 1,
  // when the dual actor is ablated). evaluate: tanh of the pessimistic mean.
  Vector<double> select_action(AgentState& state, const Vector<double>& obs,
                               ActionMode mode) const;
  Vector<double> deterministic_action(const AgentState& state, const Vector<double>& obs) const;

  GaussianPolicyOutput policy_output(const BroNetParams<float>& actor,
                                     const Vector<double>& obs) const;
  PolicyBatch<float> policy_batch(const BroNetParams<float>& actor, const Matrix<float>& obs) const;

  // [K x B] quantiles of one critic at (obs, action) columns.
  Matrix<float> critic_quantiles(const BroNetParams<float>& critic, const Matrix<float>& obs,
                                 const Matrix<float>& action) const;

  // Critic targets with explicit next-action noise ([A x B]).
  Matrix<float> compute_critic_target(const AgentState& state, const TransitionBatch& batch,
                                      const Matrix<float>& next_noise) const;
  // Same, drawing the noise from state.rng.
  Matrix<float> compute_critic_target(AgentState& state, const TransitionBatch& batch) const;

  CriticUpdate update_critics(AgentState& state, const TransitionBatch& batch) const;
  // Trains the critics on externally supplied targets ([K x B] or [M x B]).
  CriticUpdate fit_critics(AgentState& state, const TransitionBatch& batch,
                           const Matrix<float>& targets) const;
  ActorUpdate update_pessimistic_actor(AgentState& state, const TransitionBatch& batch) const;
  OptimisticActorUpdate update_optimistic_actor(AgentState& state,
                                                const TransitionBatch& batch) const;
  void update_temperature(AgentState& state, double entropy) const;
  void update_optimism(AgentState& state, double measured_kl) const;
  void update_kl_weight(AgentState& state, double measured_kl) const;
  void update_targets(AgentState& state) const;

  // Re-draws every network from derive_seed(state.seed, env_step, id), zeroes
  // optimizer moments and restores the dual variables.
  void reset_parameters(AgentState& state) const;
  // reset_parameters when resets are enabled and env_step is scheduled.
  bool maybe_reset(AgentState& state) const;

  // replay_ratio x (sample, critics, pessimistic actor, optimistic actor,
  // temperature, optimism, KL weight, Polyak).
  std::vector<DiagnosticRow> train_step(AgentState& state, const ReplayBuffer& buffer) const;

  // Fresh network drawn exactly as reset_parameters would at env_step.
  BroNetParams<float> fresh_network(std::uint64_t seed, std::int64_t env_step, NetworkId id) const;

  Vector<float> actor_decay_mask() const { return actor_mask_; }
  Vector<float> critic_decay_mask() const { return critic_mask_; }

 private:
  Matrix<float> critic_input(const Matrix<float>& obs, const Matrix<float>& action) const;
  Matrix<float> gaussian_noise(Rng& rng, Eigen::Index cols) const;
  AdamWConfig optimizer_config(double lr) const;

  AgentSpec spec_;
  BroNet<float> actor_net_;
  BroNet<float> critic_net_;
  Vector<float> actor_mask_;
  Vector<float> critic_mask_;
  Vector<float> levels_;
};

}  // namespace bro
