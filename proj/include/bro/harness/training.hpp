#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "bro/agent.hpp"
#include "bro/envsim.hpp"
#include "bro/harness/config.hpp"
#include "bro/harness/metrics.hpp"
#include "bro/replay.hpp"

namespace bro::harness {

// Runs `episodes` episodes with the deterministic pessimistic policy. Pure
// with respect to the agent: no learning, no replay writes.
std::vector<double> evaluate(const BroAgent& agent, const AgentState& state, Environment& env,
                             int episodes, Rng& rng);

struct TrainingHooks {
  // Called right after a scheduled reset, before any further update.
  std::function<void(const AgentState&, const ReplayBuffer&)> on_reset;
  // Called after each record is written.
  std::function<void(const MetricRecord&)> on_record;
  // Consulted after each evaluation; returning true ends the run early
  // (the final checkpoint is still written).
  std::function<bool(const AgentState&, const MetricRecord&)> should_stop;
};

struct TrainingOptions {
  TrainingHooks hooks;
  // Also dump the replay buffer next to each checkpoint.
  bool save_replay = false;
  bool write_checkpoints = true;
};

struct TrainingResult {
  AgentState state;
  std::vector<MetricRecord> records;
  bool diverged = false;
  std::filesystem::path metrics_path;
  std::filesystem::path checkpoint_path;
};

inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";

// Writes config.json, metrics.jsonl (one record per eval_every env steps)
// and checkpoint.bin into config.out_dir; periodic checkpoints go to
// checkpoint_<step>.bin. Throws ConfigError on an invalid config.
TrainingResult run_training(const RunConfig& config, const TrainingOptions& options = {});

}  // namespace bro::harness
