#include "bro/harness/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace bro::harness {

using Json = nlohmann::ordered_json;

namespace {

constexpr std::array<char, 8> kMagic = {'B', 'R', 'O', 'C', 'K', 'P', 'T', '1'};

template <class T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CheckpointError("checkpoint truncated");
  return value;
}

// Every float array in a fixed order, with the header key naming it.
template <class State, class F>
void for_each_array(State& s, F&& f) {
  f("pessimistic_actor", s.pessimistic_actor.params.values);
  f("pessimistic_actor.m", s.pessimistic_actor.optimizer.first_moment);
  f("pessimistic_actor.v", s.pessimistic_actor.optimizer.second_moment);
  f("optimistic_actor", s.optimistic_actor.params.values);
  f("optimistic_actor.m", s.optimistic_actor.optimizer.first_moment);
  f("optimistic_actor.v", s.optimistic_actor.optimizer.second_moment);
  f("critic1", s.critic1.params.values);
  f("critic1.m", s.critic1.optimizer.first_moment);
  f("critic1.v", s.critic1.optimizer.second_moment);
  f("critic2", s.critic2.params.values);
  f("critic2.m", s.critic2.optimizer.first_moment);
  f("critic2.v", s.critic2.optimizer.second_moment);
  f("target_critic1", s.target_critic1.values);
  f("target_critic2", s.target_critic2.values);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                     const AgentState& state) {
  Json header;
  header["config"] = Json::parse(to_json(config));
  header["seed"] = state.seed;
  header["env_step"] = state.env_step;
  header["gradient_step"] = state.gradient_step;
  header["log_temperature"] = state.log_temperature;
  header["optimism"] = state.optimism;
  header["kl_weight"] = state.kl_weight;
  header["diverged"] = state.diverged;
  header["rng"] = state.rng.serialize();
  header["optimizer_steps"] = {state.pessimistic_actor.optimizer.step,
                               state.optimistic_actor.optimizer.step,
                               state.critic1.optimizer.step, state.critic2.optimizer.step};
  Json sizes = Json::object();
  for_each_array(state, [&](const char* name, const Vector<float>& v) { sizes[name] = v.size(); });
  header["arrays"] = sizes;

  // Write to a sibling temp file and rename so a crash never leaves a torn checkpoint.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
    const std::string text = header.dump();
    out.write(kMagic.data(), kMagic.size());
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for_each_array(state, [&](const char*, const Vector<float>& v) {
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(float)));
    });
    if (!out) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw CheckpointError(path.string() + " is not a checkpoint");
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto length = read_pod<std::uint64_t>(in);
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw CheckpointError("checkpoint truncated");

  Json header;
  try {
    header = Json::parse(text);
  } catch (const Json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.config = run_config_from_json(header.at("config").dump());
  const auto env = make_env(ckpt.config.env);
  const BroAgent agent(ckpt.config.agent_spec(env->spec()));
  AgentState& s = ckpt.state;
  s = agent.initial_state(header.at("seed").get<std::uint64_t>());
  s.env_step = header.at("env_step").get<std::int64_t>();
  s.gradient_step = header.at("gradient_step").get<std::int64_t>();
  s.log_temperature = header.at("log_temperature").get<double>();
  s.optimism = header.at("optimism").get<double>();
  s.kl_weight = header.at("kl_weight").get<double>();
  s.diverged = header.at("diverged").get<bool>();
  s.rng.deserialize(header.at("rng").get<std::string>());
  const auto steps = header.at("optimizer_steps").get<std::vector<std::int64_t>>();
  if (steps.size() != 4) throw CheckpointError("corrupt checkpoint header: optimizer_steps");
  s.pessimistic_actor.optimizer.step = steps[0];
  s.optimistic_actor.optimizer.step = steps[1];
  s.critic1.optimizer.step = steps[2];
  s.critic2.optimizer.step = steps[3];

  const Json& sizes = header.at("arrays");
  for_each_array(s, [&](const char* name, Vector<float>& v) {
    if (sizes.at(name).get<Eigen::Index>() != v.size()) {
      throw CheckpointError(std::string("checkpoint array '") + name +
                            "' does not match the configured network size");
    }
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    if (!in) throw CheckpointError("checkpoint truncated");
  });
  return ckpt;
}

std::filesystem::path replay_path_for(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".replay";
}

void save_replay(const std::filesystem::path& path, const ReplayBuffer& buffer) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write replay dump " + path.string());
  buffer.save(out);
}

std::optional<ReplayBuffer> load_replay(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return ReplayBuffer::load(in);
}

}  // namespace bro::harness
