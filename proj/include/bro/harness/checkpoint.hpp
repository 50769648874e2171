#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>

#include "bro/agent.hpp"
#include "bro/harness/config.hpp"
#include "bro/replay.hpp"

namespace bro::harness {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Layout: 8-byte magic "BROCKPT1", u32 format version, u64 header length,
// a JSON header (run config, counters, dual variables, RNG state, optimizer
// step counts, array lengths), then the raw float arrays in header order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  AgentState state;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const AgentState& state);
// Validates magic, version and array sizes against the config's agent spec.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Replay dump stored next to a checkpoint as "<checkpoint>.replay".
std::filesystem::path replay_path_for(const std::filesystem::path& checkpoint);
void save_replay(const std::filesystem::path& path, const ReplayBuffer& buffer);
std::optional<ReplayBuffer> load_replay(const std::filesystem::path& path);

}  // namespace bro::harness
