#include "bro/harness/training.hpp"

#include <limits>
#include <utility>

#include "bro/errors.hpp"
#include "bro/harness/checkpoint.hpp"

namespace bro::harness {

namespace {

// Independent streams for the training env and evaluation episodes.
constexpr std::uint64_t kEnvStream = 0xE11;
constexpr std::uint64_t kEvalStream = 0xE7A1;

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> evaluate(const BroAgent& agent, const AgentState& state, Environment& env,
                             int episodes, Rng& rng) {
  require_domain(episodes >= 1, "evaluate needs at least one episode");
  std::vector<double> returns;
  returns.reserve(static_cast<std::size_t>(episodes));
  const EnvSpec& spec = env.spec();
  for (int e = 0; e < episodes; ++e) {
    Vector<double> obs = env.reset(rng);
    double total = 0.0;
    for (;;) {
      const StepResult r = env.step(to_env_action(spec, agent.deterministic_action(state, obs)));
      total += r.reward;
      if (r.terminated || r.truncated) break;
      obs = r.obs;
    }
    returns.push_back(total);
  }
  return returns;
}

TrainingResult run_training(const RunConfig& config, const TrainingOptions& options) {
  config.validate();
  const std::filesystem::path out_dir(config.out_dir);
  std::filesystem::create_directories(out_dir);
  save_run_config(config, out_dir / kConfigFile);

  auto env = make_env(config.env);
  auto eval_env = env->clone();
  const EnvSpec& spec = env->spec();
  const BroAgent agent(config.agent_spec(spec));

  TrainingResult result;
  result.metrics_path = out_dir / kMetricsFile;
  result.checkpoint_path = out_dir / kCheckpointFile;
  AgentState& state = result.state;
  state = agent.initial_state(config.seed);
  ReplayBuffer buffer(spec.obs_dim, spec.act_dim, config.buffer_capacity);
  Rng env_rng(derive_seed(config.seed, kEnvStream));
  Rng eval_rng(derive_seed(config.seed, kEvalStream));
  MetricsWriter writer(result.metrics_path);
  DiagnosticAccumulator diagnostics;
  std::vector<std::int64_t> resets;

  auto checkpoint = [&](const std::filesystem::path& path) {
    if (!options.write_checkpoints) return;
    save_checkpoint(path, config, state);
    if (options.save_replay) save_replay(replay_path_for(path), buffer);
  };
  auto emit = [&](const std::vector<double>& returns, const char* status) {
    MetricRecord record;
    record.env_step = state.env_step;
    record.gradient_step = state.gradient_step;
    record.episode_returns = returns;
    record.eval_return = mean(returns);
    record.diagnostics = diagnostics.take();
    record.resets = std::exchange(resets, {});
    record.status = status;
    writer.append(record);
    result.records.push_back(record);
    if (options.hooks.on_record) options.hooks.on_record(record);
  };

  Vector<double> obs = env->reset(env_rng);
  while (state.env_step < config.total_env_steps) {
    const Vector<double> action = agent.select_action(state, obs, ActionMode::explore);
    const StepResult step = env->step(to_env_action(spec, action));
    buffer.add({obs, action, step.reward, step.obs, step.terminated, step.truncated});
    ++state.env_step;

    if (agent.maybe_reset(state)) {
      resets.push_back(state.env_step);
      if (options.hooks.on_reset) options.hooks.on_reset(state, buffer);
    }
    if (state.env_step >= config.hyper.exploratory_steps) {
      for (const DiagnosticRow& row : agent.train_step(state, buffer)) diagnostics.add(row);
    }
    if (state.diverged) {
      result.diverged = true;
      emit({}, "diverged");
      checkpoint(result.checkpoint_path);
      return result;
    }

    obs = step.obs;
    if (step.terminated || step.truncated) obs = env->reset(env_rng);

    if (state.env_step % config.eval_every == 0) {
      emit(evaluate(agent, state, *eval_env, config.eval_episodes, eval_rng), "ok");
      if (options.hooks.should_stop && options.hooks.should_stop(state, result.records.back())) break;
    }
    if (config.checkpoint_every > 0 && state.env_step % config.checkpoint_every == 0 &&
        state.env_step < config.total_env_steps) {
      checkpoint(out_dir / ("checkpoint_" + std::to_string(state.env_step) + ".bin"));
    }
  }
  checkpoint(result.checkpoint_path);
  return result;
}

}  // namespace bro::harness
