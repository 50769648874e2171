#include <gtest/gtest.h>

#include "bro/agent.hpp"
#include "bro/distributional.hpp"
#include "bro/envsim.hpp"
#include "bro/errors.hpp"

using namespace bro;

namespace {

AgentSpec small_spec(int obs_dim = 3, int act_dim = 1) {
  AgentSpec spec;
  spec.obs_dim = obs_dim;
  spec.act_dim = act_dim;
  spec.actor = {1, 16, Architecture::bronet};
  spec.critic = {1, 16, Architecture::bronet};
  spec.hyper.num_quantiles = 8;
  spec.hyper.batch_size = 16;
  spec.hyper.exploratory_steps = 0;
  return spec;
}

ReplayBuffer random_buffer(int obs_dim, int act_dim, int count, std::uint64_t seed) {
  ReplayBuffer buffer(obs_dim, act_dim, 1000);
  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    Transition t;
    t.obs = Vector<double>(obs_dim);
    t.next_obs = Vector<double>(obs_dim);
    t.action = Vector<double>(act_dim);
    for (auto& v : t.obs) v = rng.normal();
    for (auto& v : t.next_obs) v = rng.normal();
    for (auto& v : t.action) v = rng.uniform(-1, 1);
    t.reward = rng.normal();
    t.terminated = rng.uniform(0, 1) < 0.1;
    buffer.add(t);
  }
  return buffer;
}

}  // namespace

TEST(Presets, TableValues) {
  const auto hp = bro_preset();
  EXPECT_EQ(hp.batch_size, 128);
  EXPECT_EQ(hp.replay_ratio, 10);
  EXPECT_EQ(hp.discount, 0.99);
  EXPECT_EQ(hp.polyak, 0.005);
  EXPECT_EQ(hp.lr_actor, 3e-4);
  EXPECT_EQ(hp.lr_critic, 3e-4);
  EXPECT_EQ(hp.num_quantiles, 100);
  EXPECT_EQ(hp.kl_target, 0.05);
  EXPECT_EQ(hp.std_multiplier, 0.75);
  EXPECT_EQ(hp.exploratory_steps, 2500);
  EXPECT_EQ(hp.initial_optimism, 1.0);
  EXPECT_EQ(bro_fast_preset().replay_ratio, 2);
  EXPECT_EQ(default_reset_schedule(),
            (std::vector<std::int64_t>{15000, 50000, 250000, 500000, 750000, 1000000}));
}

TEST(Hyperparams, ValidationRejectsBadValues) {
  auto hp = bro_preset();
  hp.discount = 1.5;
  EXPECT_THROW(hp.validate(), DomainError);
  hp = bro_preset();
  hp.replay_ratio = 0;
  EXPECT_THROW(hp.validate(), DomainError);
  hp = bro_preset();
  hp.pessimism_floor = 2.0;
  EXPECT_THROW(hp.validate(), DomainError);
}

TEST(CriticTarget, WorkedExample) {
  const RowArray<double> r = RowArray<double>::Constant(1, 1.0);
  const RowArray<double> done = RowArray<double>::Zero(1);
  const Matrix<double> q = Matrix<double>::Constant(4, 1, 2.0);
  const RowArray<double> logp = RowArray<double>::Constant(1, -1.0);
  const Matrix<double> y = critic_target_from<double>(r, done, q, logp, 0.5, 0.99);
  for (Eigen::Index k = 0; k < 4; ++k) EXPECT_NEAR(y(k, 0), 3.475, 1e-12);
  const Matrix<double> terminal =
      critic_target_from<double>(r, RowArray<double>::Ones(1), q, logp, 0.5, 0.99);
  EXPECT_TRUE((terminal.array() == 1.0).all());
}

TEST(DualSteps, WorkedExamples) {
  EXPECT_NEAR(dual::optimism_step(1.0, 0.0, 0.10, 0.05, 3e-4), 0.999985, 1e-12);
  EXPECT_NEAR(dual::kl_weight_step(1.0, 0.10, 0.05, 3e-4), 1.000015, 1e-12);
  EXPECT_EQ(dual::optimism_step(0.7, 0.0, 0.05, 0.05, 3e-4), 0.7);
  EXPECT_EQ(dual::kl_weight_step(0.7, 0.05, 0.05, 3e-4), 0.7);
}

TEST(DualSteps, OppositeSignsAndFloors) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double kl = rng.uniform(0, 0.2);
    const double beta = rng.uniform(0.5, 2);
    const double tau = rng.uniform(0.5, 2);
    const double db = dual::optimism_step(beta, 0.0, kl, 0.05, 3e-4) - beta;
    const double dt = dual::kl_weight_step(tau, kl, 0.05, 3e-4) - tau;
    EXPECT_LE(db * dt, 0.0);
  }
  double beta = 1.0;
  double tau = 1.0;
  for (int i = 0; i < 100000; ++i) {
    beta = dual::optimism_step(beta, 0.0, 10.0, 0.05, 3e-4);
    tau = dual::kl_weight_step(tau, 0.0, 0.05, 3e-4);
  }
  EXPECT_EQ(beta, 0.0);
  EXPECT_EQ(tau, dual::kMinKlWeight);
  EXPECT_EQ(dual::optimism_step(0.3, 0.25, 10.0, 0.05, 1.0), 0.25);
}

TEST(DualSteps, TemperatureRisesWhenEntropyBelowTarget) {
  EXPECT_GT(dual::temperature_step(0.0, 0.1, 0.5, 3e-4), 0.0);
  EXPECT_LT(dual::temperature_step(0.0, 0.9, 0.5, 3e-4), 0.0);
  EXPECT_EQ(dual::temperature_step(0.2, 0.5, 0.5, 3e-4), 0.2);
  double log_alpha = 0.0;
  for (int i = 0; i < 1'000'000; ++i) log_alpha = dual::temperature_step(log_alpha, 50.0, -0.5, 3e-4);
  EXPECT_GT(std::exp(log_alpha), 0.0);
}

TEST(Agent, InitialStateAndDeterministicInit) {
  const BroAgent agent(small_spec());
  const auto a = agent.initial_state(5);
  const auto b = agent.initial_state(5);
  const auto c = agent.initial_state(6);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a.critic1.params == c.critic1.params);
  EXPECT_FALSE(a.critic1.params == a.critic2.params);
  EXPECT_EQ(a.target_critic1, a.critic1.params);
  EXPECT_EQ(a.temperature(), 1.0);
  EXPECT_EQ(a.optimism, 1.0);
  EXPECT_EQ(a.critic1.params.values.size(), agent.critic_net().num_params());
}

TEST(Agent, SelectActionModes) {
  auto spec = small_spec();
  spec.hyper.exploratory_steps = 10;
  const BroAgent agent(spec);
  auto s1 = agent.initial_state(2);
  auto s2 = agent.initial_state(2);
  const Vector<double> obs = Vector<double>::Constant(3, 0.1);
  for (int i = 0; i < 50; ++i) {
    const auto a = agent.select_action(s1, obs, ActionMode::explore);
    EXPECT_EQ(a, agent.select_action(s2, obs, ActionMode::explore));
    EXPECT_LE(a.cwiseAbs().maxCoeff(), 1.0);
  }
  // Evaluation is tanh of the pessimistic mean and consumes no randomness.
  const Rng before = s1.rng;
  const auto eval = agent.select_action(s1, obs, ActionMode::evaluate);
  EXPECT_TRUE(s1.rng == before);
  EXPECT_EQ(eval, deterministic_action(agent.policy_output(s1.pessimistic_actor.params, obs)));
  EXPECT_THROW(agent.select_action(s1, Vector<double>::Zero(2), ActionMode::explore), ShapeError);
  EXPECT_THROW(agent.select_action(s1, Vector<double>::Constant(3, NAN), ActionMode::explore),
               DomainError);
}

TEST(Agent, ExploresWithOptimisticOrPessimisticActor) {
  auto spec = small_spec();
  const Vector<double> obs = Vector<double>::Constant(3, -0.2);
  {
    const BroAgent agent(spec);
    auto s = agent.initial_state(3);
    Rng copy = s.rng;
    const auto a = agent.select_action(s, obs, ActionMode::explore);
    EXPECT_EQ(a, sample_action(agent.policy_output(s.optimistic_actor.params, obs), copy, 0.75).action);
  }
  spec.hyper.toggles.use_dual_actor = false;
  {
    const BroAgent agent(spec);
    auto s = agent.initial_state(3);
    Rng copy = s.rng;
    const auto a = agent.select_action(s, obs, ActionMode::explore);
    EXPECT_EQ(a, sample_action(agent.policy_output(s.pessimistic_actor.params, obs), copy, 1.0).action);
  }
}

TEST(Agent, CdqTargetsNeverExceedMeanTargets) {
  auto spec = small_spec();
  const BroAgent mean_agent(spec);
  spec.hyper.toggles.use_cdq = true;
  const BroAgent cdq_agent(spec);
  const auto state = mean_agent.initial_state(4);
  const auto buffer = random_buffer(3, 1, 200, 4);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const auto batch = buffer.sample(16, rng);
    Matrix<float> noise(1, 16);
    for (auto& v : noise.reshaped()) v = static_cast<float>(rng.normal());
    const Matrix<float> y_mean = mean_agent.compute_critic_target(state, batch, noise);
    const Matrix<float> y_cdq = cdq_agent.compute_critic_target(state, batch, noise);
    EXPECT_TRUE((y_cdq.array() <= y_mean.array()).all());
  }
}

TEST(Agent, TargetsUseOnlineCriticsWithoutTargetNetwork) {
  auto spec = small_spec();
  spec.hyper.toggles.use_target_network = false;
  const BroAgent agent(spec);
  auto state = agent.initial_state(8);
  // Move the online critics away from the stored target copies.
  for (auto& v : state.critic1.params.values) v += 0.05f;
  const auto buffer = random_buffer(3, 1, 50, 8);
  Rng rng(8);
  const auto batch = buffer.sample(16, rng);
  const Matrix<float> noise = Matrix<float>::Zero(1, 16);
  AgentState aliased = state;
  aliased.target_critic1 = state.critic1.params;
  aliased.target_critic2 = state.critic2.params;
  spec.hyper.toggles.use_target_network = true;
  const BroAgent with_targets(spec);
  EXPECT_EQ(agent.compute_critic_target(state, batch, noise),
            with_targets.compute_critic_target(aliased, batch, noise));
  EXPECT_NE(agent.compute_critic_target(state, batch, noise),
            with_targets.compute_critic_target(state, batch, noise));
}

TEST(Agent, UpdatesTouchOnlyTheirOwnParameters) {
  const BroAgent agent(small_spec());
  auto state = agent.initial_state(9);
  const auto buffer = random_buffer(3, 1, 100, 9);
  Rng rng(9);
  const auto batch = buffer.sample(16, rng);

  auto s = state;
  ASSERT_TRUE(agent.update_critics(s, batch).applied);
  EXPECT_EQ(s.pessimistic_actor, state.pessimistic_actor);
  EXPECT_EQ(s.optimistic_actor, state.optimistic_actor);
  EXPECT_NE(s.critic1, state.critic1);
  EXPECT_EQ(s.target_critic1, state.target_critic1);

  s = state;
  ASSERT_TRUE(agent.update_pessimistic_actor(s, batch).applied);
  EXPECT_EQ(s.critic1, state.critic1);
  EXPECT_EQ(s.critic2, state.critic2);
  EXPECT_EQ(s.optimistic_actor, state.optimistic_actor);
  EXPECT_NE(s.pessimistic_actor, state.pessimistic_actor);

  s = state;
  ASSERT_TRUE(agent.update_optimistic_actor(s, batch).applied);
  EXPECT_EQ(s.critic1, state.critic1);
  EXPECT_EQ(s.pessimistic_actor, state.pessimistic_actor);
  EXPECT_NE(s.optimistic_actor, state.optimistic_actor);
}

TEST(Agent, IdenticalCriticsMakeOptimismIrrelevant) {
  const BroAgent agent(small_spec());
  auto state = agent.initial_state(10);
  state.critic2 = state.critic1;
  const auto buffer = random_buffer(3, 1, 100, 10);
  Rng rng(10);
  const auto batch = buffer.sample(16, rng);
  auto low = state;
  auto high = state;
  low.optimism = 0.0;
  high.optimism = 5.0;
  agent.update_optimistic_actor(low, batch);
  agent.update_optimistic_actor(high, batch);
  EXPECT_EQ(low.optimistic_actor, high.optimistic_actor);
}

TEST(Agent, LargeKlWeightPullsOptimisticActorToPessimistic) {
  auto spec = small_spec();
  spec.hyper.lr_actor = 3e-3;
  const BroAgent agent(spec);
  auto state = agent.initial_state(11);
  state.optimism = 0.0;
  state.kl_weight = 1000.0;
  const auto buffer = random_buffer(3, 1, 200, 11);
  Rng rng(11);
  double first = 0.0;
  double last = 0.0;
  for (int i = 0; i < 300; ++i) {
    const auto batch = buffer.sample(16, rng);
    const auto u = agent.update_optimistic_actor(state, batch);
    if (i == 0) first = u.measured_kl;
    last = u.measured_kl;
  }
  EXPECT_GT(first, 1e-4);
  EXPECT_LT(last, 0.1 * first);
}

TEST(Agent, CriticLossDecreasesOnFixedRegressionBatch) {
  const BroAgent agent(small_spec());
  auto state = agent.initial_state(12);
  const auto buffer = random_buffer(3, 1, 16, 12);
  std::vector<std::size_t> all(16);
  for (std::size_t i = 0; i < 16; ++i) all[i] = i;
  const auto batch = buffer.gather(all);
  const Matrix<float> targets = Matrix<float>::Constant(8, 16, 2.0f) +
                                Matrix<float>(batch.obs.row(0).replicate(8, 1));
  const double first = agent.fit_critics(state, batch, targets).loss;
  double last = first;
  for (int i = 0; i < 200; ++i) last = agent.fit_critics(state, batch, targets).loss;
  EXPECT_LT(last, 0.5 * first);
}

TEST(Agent, SingleQuantileLossIsHalfHuber) {
  auto spec = small_spec();
  spec.hyper.toggles.use_quantiles = false;
  const BroAgent agent(spec);
  EXPECT_EQ(agent.critic_net().config().output_dim, 1);
  auto state = agent.initial_state(13);
  const auto buffer = random_buffer(3, 1, 16, 13);
  Rng rng(13);
  const auto batch = buffer.sample(16, rng);
  Matrix<float> targets(1, 16);
  for (auto& v : targets.reshaped()) v = static_cast<float>(3.0 * rng.normal());
  const Matrix<float> in_q1 = agent.critic_quantiles(state.critic1.params, batch.obs, batch.action);
  const Matrix<float> in_q2 = agent.critic_quantiles(state.critic2.params, batch.obs, batch.action);
  auto huber = [](double u) { return std::abs(u) <= 1 ? 0.5 * u * u : std::abs(u) - 0.5; };
  double expected = 0.0;
  for (Eigen::Index b = 0; b < 16; ++b) {
    expected += 0.5 * huber(targets(0, b) - in_q1(0, b)) / 16.0;
    expected += 0.5 * huber(targets(0, b) - in_q2(0, b)) / 16.0;
  }
  EXPECT_NEAR(agent.fit_critics(state, batch, targets).loss, expected, 1e-5);
}

TEST(Agent, ResetRestoresFreshSeededNetworksAndDuals) {
  const BroAgent agent(small_spec());
  auto state = agent.initial_state(14);
  const auto buffer = random_buffer(3, 1, 100, 14);
  for (int i = 0; i < 5; ++i) agent.train_step(state, buffer);
  state.optimism = 0.3;
  state.kl_weight = 2.0;
  state.env_step = 100000;
  const auto before = state;
  EXPECT_FALSE(agent.maybe_reset(state));
  EXPECT_TRUE(state == before);

  state.env_step = 15000;
  EXPECT_TRUE(agent.maybe_reset(state));
  EXPECT_EQ(state.critic1.params, agent.fresh_network(14, 15000, NetworkId::critic1));
  EXPECT_EQ(state.critic2.params, agent.fresh_network(14, 15000, NetworkId::critic2));
  EXPECT_EQ(state.pessimistic_actor.params,
            agent.fresh_network(14, 15000, NetworkId::pessimistic_actor));
  EXPECT_EQ(state.target_critic1, state.critic1.params);
  EXPECT_TRUE((state.critic1.optimizer.first_moment.array() == 0.0f).all());
  EXPECT_EQ(state.critic1.optimizer.step, 0);
  EXPECT_EQ(state.optimism, 1.0);
  EXPECT_EQ(state.kl_weight, 1.0);
  EXPECT_EQ(state.temperature(), 1.0);
  EXPECT_EQ(state.gradient_step, before.gradient_step);

  auto spec = small_spec();
  spec.hyper.toggles.use_resets = false;
  const BroAgent no_reset(spec);
  auto s = no_reset.initial_state(14);
  s.env_step = 15000;
  EXPECT_FALSE(no_reset.maybe_reset(s));
}

TEST(Agent, TrainStepRowsPerReplayRatio) {
  auto spec = small_spec();
  spec.hyper.replay_ratio = 10;
  const BroAgent agent(spec);
  auto state = agent.initial_state(15);
  const auto buffer = random_buffer(3, 1, 100, 15);
  const auto rows = agent.train_step(state, buffer);
  EXPECT_EQ(rows.size(), 10u);
  EXPECT_EQ(state.gradient_step, 10);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.skipped);
    EXPECT_TRUE(std::isfinite(r.td_error) && std::isfinite(r.mean_q) && std::isfinite(r.measured_kl));
  }

  spec.hyper = bro_fast_preset();
  spec.hyper.batch_size = 16;
  spec.hyper.num_quantiles = 8;
  const BroAgent fast(spec);
  auto s = fast.initial_state(15);
  EXPECT_EQ(fast.train_step(s, buffer).size(), 2u);
}

TEST(Agent, TrainStepOnSmallBufferIsWarningNoOp) {
  const BroAgent agent(small_spec());
  auto state = agent.initial_state(16);
  const auto before = state;
  const auto rows = agent.train_step(state, random_buffer(3, 1, 5, 16));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_TRUE(rows[0].skipped);
  EXPECT_FALSE(rows[0].warning.empty());
  EXPECT_TRUE(state == before);
}

TEST(Agent, DualSignContractPerIteration) {
  auto spec = small_spec();
  spec.hyper.replay_ratio = 1;
  const BroAgent agent(spec);
  auto state = agent.initial_state(17);
  const auto buffer = random_buffer(3, 1, 200, 17);
  for (int i = 0; i < 200; ++i) {
    const double beta = state.optimism;
    const double tau = state.kl_weight;
    const auto rows = agent.train_step(state, buffer);
    const double excess = rows[0].measured_kl / spec.act_dim - spec.hyper.kl_target;
    if (excess > 0) {
      EXPECT_LE(state.optimism, beta);
      EXPECT_GE(state.kl_weight, tau);
    } else if (excess < 0) {
      EXPECT_GE(state.optimism, beta);
      EXPECT_LE(state.kl_weight, tau);
    }
  }
}

TEST(Agent, BitwiseDeterministicDiagnostics) {
  const BroAgent agent(small_spec());
  const auto buffer = random_buffer(3, 1, 200, 18);
  auto a = agent.initial_state(18);
  auto b = agent.initial_state(18);
  for (int i = 0; i < 300; ++i) {
    const auto ra = agent.train_step(a, buffer);
    const auto rb = agent.train_step(b, buffer);
    ASSERT_EQ(ra.size(), rb.size());
    for (std::size_t j = 0; j < ra.size(); ++j) {
      ASSERT_EQ(ra[j].td_error, rb[j].td_error);
      ASSERT_EQ(ra[j].measured_kl, rb[j].measured_kl);
      ASSERT_EQ(ra[j].critic_grad_norm, rb[j].critic_grad_norm);
    }
  }
  EXPECT_TRUE(a == b);
}

TEST(Agent, PessimisticActorFindsBanditOptimum) {
  // Q(a) = -a^2 on a one-step bandit: the learned mean action should approach 0.
  auto spec = small_spec(1, 1);
  spec.hyper.replay_ratio = 1;
  spec.hyper.batch_size = 64;
  spec.hyper.lr_actor = 1e-3;
  spec.hyper.lr_critic = 1e-3;
  const BroAgent agent(spec);
  auto state = agent.initial_state(19);
  GaussianBanditEnv env(0.0, 0.0, 1.0);
  Rng env_rng(19);
  ReplayBuffer buffer(1, 1, 10000);
  for (int step = 0; step < 3000; ++step) {
    const Vector<double> obs = env.reset(env_rng);
    const Vector<double> action = step < 500 ? Vector<double>::Constant(1, env_rng.uniform(-1, 1))
                                             : agent.select_action(state, obs, ActionMode::explore);
    const auto r = env.step(action);
    buffer.add({obs, action, r.reward, r.obs, r.terminated, r.truncated});
    ++state.env_step;
    if (buffer.size() >= 64) agent.train_step(state, buffer);
  }
  const Vector<double> mean_action = agent.deterministic_action(state, Vector<double>::Ones(1));
  EXPECT_LE(std::abs(mean_action(0)), 0.05);
}
