#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bro/agent.hpp"
#include "bro/envsim.hpp"

namespace bro::harness {

// Raised for malformed or invalid configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  EnvParams env;
  BroHyperparams hyper = bro_fast_preset();
  NetworkShape actor{1, 256, Architecture::bronet};
  // Model-size preset label for the critic (see kModelSizePresets).
  std::string critic_size = "4.92M";
  Architecture critic_architecture = Architecture::bronet;
  std::uint64_t seed = 0;
  std::int64_t total_env_steps = 30'000;
  std::int64_t eval_every = 1'000;
  int eval_episodes = 10;
  // 0 writes only the final checkpoint.
  std::int64_t checkpoint_every = 0;
  std::size_t buffer_capacity = 1'000'000;
  std::string out_dir = "runs/default";
  std::string label = "bro";

  // Throws ConfigError.
  void validate() const;
  AgentSpec agent_spec(const EnvSpec& env_spec) const;

  bool operator==(const RunConfig&) const = default;
};

// Flat JSON object, one key per field; unknown keys and wrong types raise ConfigError.
std::string to_json(const RunConfig& config);
RunConfig run_config_from_json(std::string_view text, const RunConfig& defaults = {});
RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& defaults = {});
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

// Keys whose values differ between two configs.
std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b);

// "bro" (replay ratio 10) or "bro-fast" (replay ratio 2).
void apply_preset(RunConfig& config, std::string_view preset);

// Ablation toggles, each a single-field change:
//   -Scale      critic_size = "1.05M"
//   +CDQ        use_cdq = true
//   +RR=1       replay_ratio = 1
//   -DualPi     use_dual_actor = false
//   -Quantile   use_quantiles = false
//   -WD         use_weight_decay = false
//   -Reset      use_resets = false
//   -TargetNet  use_target_network = false
inline constexpr std::string_view kScaleAblationSize = "1.05M";
const std::vector<std::string>& ablation_toggle_names();
void apply_toggle(RunConfig& config, std::string_view toggle);

struct AblationVariant {
  std::string name;
  RunConfig config;
};

// One variant per toggle. Each variant's config differs from base in exactly
// the toggled field; callers assign label/out_dir/seed when launching runs.
std::vector<AblationVariant> ablation_suite(const RunConfig& base);

}  // namespace bro::harness
