// bro: train, evaluate, ablate and report BRO runs.
//
// Exit codes: 0 success, 2 configuration error, 3 a run diverged, 1 anything else.

#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "bro/harness/checkpoint.hpp"
#include "bro/harness/config.hpp"
#include "bro/harness/plots.hpp"
#include "bro/harness/training.hpp"

namespace {

using namespace bro;
using namespace bro::harness;

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

void print_record(const MetricRecord& r) {
  std::fprintf(stderr, "step %lld  eval %.2f  td %.4f  q %.2f  alpha %.4f  beta %.4f  kl %.4f%s\n",
               static_cast<long long>(r.env_step), r.eval_return, r.diagnostics.td_error,
               r.diagnostics.mean_q, r.diagnostics.temperature, r.diagnostics.optimism,
               r.diagnostics.measured_kl, r.resets.empty() ? "" : "  [reset]");
}

TrainingOptions make_options(bool quiet, bool save_replay) {
  TrainingOptions options;
  options.save_replay = save_replay;
  if (!quiet) options.hooks.on_record = print_record;
  return options;
}

int train_and_report(const RunConfig& config, const TrainingOptions& options) {
  const TrainingResult result = run_training(config, options);
  if (result.diverged) {
    std::cerr << "run diverged at env step " << result.state.env_step << "\n";
    return kExitDiverged;
  }
  std::cout << result.metrics_path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BRO actor-critic training and evaluation"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train one agent");
  std::string config_path, env_name, preset, out_dir, critic_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::vector<std::string> toggles;
  bool quiet = false, save_replay = false;
  train->add_option("--config", config_path, "Flat JSON run config")->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Random seed");
  train->add_option("--env", env_name, "pendulum, lqr or bandit");
  train->add_option("--preset", preset, "bro or bro-fast")->check(CLI::IsMember({"bro", "bro-fast"}));
  train->add_option("--toggle", toggles, "Ablation toggle (repeatable)")
      ->check(CLI::IsMember(ablation_toggle_names()));
  train->add_option("--steps", steps, "Total environment steps");
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--critic-size", critic_size, "Critic model-size preset");
  train->add_flag("--save-replay", save_replay, "Dump the replay buffer next to checkpoints");
  train->add_flag("-q,--quiet", quiet, "No per-record progress");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint_path;
  int episodes = 10;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint.bin")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Number of episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "Evaluation seed");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run the base config and every ablation toggle");
  std::string base_config, ablate_out = "runs/ablation";
  int seeds = 1;
  std::optional<std::int64_t> ablate_steps;
  bool ablate_quiet = false;
  ablate->add_option("--base-config", base_config, "Flat JSON base config")->required()->check(CLI::ExistingFile);
  ablate->add_option("--seeds", seeds, "Seeds per variant")->check(CLI::PositiveNumber);
  ablate->add_option("--out", ablate_out, "Output directory");
  ablate->add_option("--steps", ablate_steps, "Override total environment steps");
  ablate->add_flag("-q,--quiet", ablate_quiet, "No per-record progress");

  // report
  auto* report = app.add_subcommand("report", "Plot learning curves and ablation bars");
  std::string runs_dir, report_out;
  std::string base_label = "bro";
  report->add_option("--runs-dir", runs_dir, "Directory searched for metrics.jsonl")->required();
  report->add_option("--out-dir", report_out, "Where plots and CSVs go")->required();
  report->add_option("--base-label", base_label, "Label of the ablation base");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train) {
      RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      if (!preset.empty()) apply_preset(config, preset);
      if (!env_name.empty()) config.env.name = env_name;
      if (seed) config.seed = *seed;
      if (steps) config.total_env_steps = *steps;
      if (!out_dir.empty()) config.out_dir = out_dir;
      if (!critic_size.empty()) config.critic_size = critic_size;
      for (const auto& t : toggles) apply_toggle(config, t);
      config.validate();
      return train_and_report(config, make_options(quiet, save_replay));
    }
    if (*eval) {
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      auto env = make_env(ckpt.config.env);
      const BroAgent agent(ckpt.config.agent_spec(env->spec()));
      Rng rng(eval_seed);
      const auto returns = evaluate(agent, ckpt.state, *env, episodes, rng);
      double sum = 0.0;
      for (double r : returns) sum += r;
      nlohmann::ordered_json out;
      out["env_step"] = ckpt.state.env_step;
      out["mean_return"] = sum / static_cast<double>(returns.size());
      out["episode_returns"] = returns;
      std::cout << out.dump() << "\n";
      return 0;
    }
    if (*ablate) {
      RunConfig base = load_run_config(base_config);
      if (ablate_steps) base.total_env_steps = *ablate_steps;
      base.validate();
      std::vector<AblationVariant> variants{{base.label, base}};
      for (auto& v : ablation_suite(base)) variants.push_back(std::move(v));
      bool diverged = false;
      std::vector<std::filesystem::path> files;
      for (auto& variant : variants) {
        for (int s = 0; s < seeds; ++s) {
          RunConfig config = variant.config;
          config.label = variant.name;
          config.seed = base.seed + static_cast<std::uint64_t>(s);
          config.out_dir = (std::filesystem::path(ablate_out) / variant.name /
                            ("seed_" + std::to_string(config.seed)))
                               .string();
          std::cerr << "== " << variant.name << " seed " << config.seed << "\n";
          const TrainingResult result = run_training(config, make_options(ablate_quiet, false));
          diverged = diverged || result.diverged;
          files.push_back(result.metrics_path);
        }
      }
      PlotOptions plot;
      plot.base_label = base.label;
      for (const auto& f : emit_plots(files, std::filesystem::path(ablate_out) / "report", plot).files) {
        std::cout << f.string() << "\n";
      }
      return diverged ? kExitDiverged : 0;
    }
    if (*report) {
      PlotOptions plot;
      plot.base_label = base_label;
      const auto files = find_metrics_files(runs_dir);
      if (files.empty()) {
        std::cerr << "no metrics.jsonl under " << runs_dir << "\n";
        return 1;
      }
      for (const auto& f : emit_plots(files, report_out, plot).files) std::cout << f.string() << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
