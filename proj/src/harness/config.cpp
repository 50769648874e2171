#include "bro/harness/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "bro/errors.hpp"

namespace bro::harness {

using Json = nlohmann::ordered_json;

namespace {

// One accessor pair per flat key. The table fixes both the serialized key
// order and the set of accepted keys.
struct Field {
  std::function<Json(const RunConfig&)> get;
  std::function<void(RunConfig&, const Json&)> set;
};

template <class T>
T expect(const Json& value, std::string_view key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!value.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!value.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (value.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!value.is_number()) throw ConfigError("");
    } else {
      if (!value.is_string()) throw ConfigError("");
    }
    return value.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + std::string(key) + "' has the wrong type: " + value.dump());
  }
}

#define BRO_FIELD(key, member)                                                              \
  {                                                                                         \
    key, Field {                                                                            \
      [](const RunConfig& c) { return Json(c.member); },                                    \
          [](RunConfig& c, const Json& v) { c.member = expect<decltype(c.member)>(v, key); } \
    }                                                                                       \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      BRO_FIELD("label", label),
      BRO_FIELD("env", env.name),
      BRO_FIELD("pendulum_max_steps", env.pendulum_max_steps),
      BRO_FIELD("lqr_dim", env.lqr_dim),
      BRO_FIELD("lqr_a", env.lqr_a),
      BRO_FIELD("lqr_b", env.lqr_b),
      BRO_FIELD("lqr_q", env.lqr_q),
      BRO_FIELD("lqr_r", env.lqr_r),
      BRO_FIELD("lqr_noise_std", env.lqr_noise_std),
      BRO_FIELD("lqr_x0_bound", env.lqr_x0_bound),
      BRO_FIELD("lqr_action_bound", env.lqr_action_bound),
      BRO_FIELD("lqr_max_steps", env.lqr_max_steps),
      BRO_FIELD("bandit_mu", env.bandit_mu),
      BRO_FIELD("bandit_sigma", env.bandit_sigma),
      BRO_FIELD("bandit_curvature", env.bandit_curvature),
      BRO_FIELD("seed", seed),
      BRO_FIELD("total_env_steps", total_env_steps),
      BRO_FIELD("eval_every", eval_every),
      BRO_FIELD("eval_episodes", eval_episodes),
      BRO_FIELD("checkpoint_every", checkpoint_every),
      BRO_FIELD("buffer_capacity", buffer_capacity),
      BRO_FIELD("out_dir", out_dir),
      BRO_FIELD("batch_size", hyper.batch_size),
      BRO_FIELD("replay_ratio", hyper.replay_ratio),
      BRO_FIELD("discount", hyper.discount),
      BRO_FIELD("polyak", hyper.polyak),
      BRO_FIELD("lr_actor", hyper.lr_actor),
      BRO_FIELD("lr_critic", hyper.lr_critic),
      BRO_FIELD("lr_dual", hyper.lr_dual),
      BRO_FIELD("num_quantiles", hyper.num_quantiles),
      BRO_FIELD("huber_kappa", hyper.huber_kappa),
      BRO_FIELD("kl_target", hyper.kl_target),
      BRO_FIELD("initial_optimism", hyper.initial_optimism),
      BRO_FIELD("initial_kl_weight", hyper.initial_kl_weight),
      BRO_FIELD("std_multiplier", hyper.std_multiplier),
      BRO_FIELD("target_entropy_per_dim", hyper.target_entropy_per_dim),
      BRO_FIELD("exploratory_steps", hyper.exploratory_steps),
      BRO_FIELD("initial_temperature", hyper.initial_temperature),
      BRO_FIELD("weight_decay", hyper.weight_decay),
      BRO_FIELD("pessimism_floor", hyper.pessimism_floor),
      {"reset_steps",
       Field{[](const RunConfig& c) { return Json(c.hyper.reset_steps); },
             [](RunConfig& c, const Json& v) {
               if (!v.is_array()) throw ConfigError("config key 'reset_steps' must be an array");
               std::vector<std::int64_t> steps;
               for (const auto& item : v) steps.push_back(expect<std::int64_t>(item, "reset_steps"));
               c.hyper.reset_steps = std::move(steps);
             }}},
      BRO_FIELD("use_cdq", hyper.toggles.use_cdq),
      BRO_FIELD("use_dual_actor", hyper.toggles.use_dual_actor),
      BRO_FIELD("use_quantiles", hyper.toggles.use_quantiles),
      BRO_FIELD("use_weight_decay", hyper.toggles.use_weight_decay),
      BRO_FIELD("use_target_network", hyper.toggles.use_target_network),
      BRO_FIELD("use_resets", hyper.toggles.use_resets),
      BRO_FIELD("actor_blocks", actor.num_blocks),
      BRO_FIELD("actor_hidden", actor.hidden_size),
      BRO_FIELD("critic_size", critic_size),
      {"critic_architecture",
       Field{[](const RunConfig& c) { return Json(std::string(to_string(c.critic_architecture))); },
             [](RunConfig& c, const Json& v) {
               try {
                 c.critic_architecture =
                     architecture_from_string(expect<std::string>(v, "critic_architecture"));
               } catch (const DomainError& e) {
                 throw ConfigError(e.what());
               }
             }}},
  };
  return table;
}

#undef BRO_FIELD

Json to_json_object(const RunConfig& config) {
  Json out = Json::object();
  for (const auto& [key, field] : fields()) out[key] = field.get(config);
  return out;
}

}  // namespace

void RunConfig::validate() const {
  try {
    hyper.validate();
    model_size_preset(critic_size);
    make_env(env);
    require_domain(actor.num_blocks >= 1 && actor.hidden_size >= 1, "actor shape must be >= 1");
  } catch (const std::logic_error& e) {
    throw ConfigError(e.what());
  }
  if (total_env_steps < eval_every || eval_every < 1) {
    throw ConfigError("require total_env_steps >= eval_every >= 1");
  }
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
}

AgentSpec RunConfig::agent_spec(const EnvSpec& env_spec) const {
  const ModelSizePreset& size = model_size_preset(critic_size);
  AgentSpec spec;
  spec.obs_dim = env_spec.obs_dim;
  spec.act_dim = env_spec.act_dim;
  spec.hyper = hyper;
  spec.actor = actor;
  spec.critic = {size.num_blocks, size.hidden_size, critic_architecture};
  return spec;
}

std::string to_json(const RunConfig& config) { return to_json_object(config).dump(2); }

RunConfig run_config_from_json(std::string_view text, const RunConfig& defaults) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a flat JSON object");
  std::map<std::string, const Field*> lookup;
  for (const auto& [key, field] : fields()) lookup[key] = &field;
  RunConfig config = defaults;
  for (const auto& [key, value] : doc.items()) {
    auto it = lookup.find(key);
    if (it == lookup.end()) throw ConfigError("unknown config key '" + key + "'");
    if (value.is_object()) throw ConfigError("config key '" + key + "' must not be nested");
    it->second->set(config, value);
  }
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path, const RunConfig& defaults) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return run_config_from_json(buffer.str(), defaults);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void save_run_config(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config file " + path.string());
  out << to_json(config) << '\n';
}

std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> keys;
  for (const auto& [key, field] : fields()) {
    if (field.get(a) != field.get(b)) keys.push_back(key);
  }
  return keys;
}

void apply_preset(RunConfig& config, std::string_view preset) {
  if (preset == "bro") {
    config.hyper.replay_ratio = bro_preset().replay_ratio;
  } else if (preset == "bro-fast") {
    config.hyper.replay_ratio = bro_fast_preset().replay_ratio;
  } else {
    throw ConfigError("unknown preset '" + std::string(preset) + "' (expected bro or bro-fast)");
  }
}

const std::vector<std::string>& ablation_toggle_names() {
  static const std::vector<std::string> names = {"-Scale",    "+CDQ", "+RR=1",  "-DualPi",
                                                 "-Quantile", "-WD",  "-Reset", "-TargetNet"};
  return names;
}

void apply_toggle(RunConfig& config, std::string_view toggle) {
  auto& t = config.hyper.toggles;
  if (toggle == "-Scale") {
    config.critic_size = std::string(kScaleAblationSize);
  } else if (toggle == "+CDQ") {
    t.use_cdq = true;
  } else if (toggle == "+RR=1") {
    config.hyper.replay_ratio = 1;
  } else if (toggle == "-DualPi") {
    t.use_dual_actor = false;
  } else if (toggle == "-Quantile") {
    t.use_quantiles = false;
  } else if (toggle == "-WD") {
    t.use_weight_decay = false;
  } else if (toggle == "-Reset") {
    t.use_resets = false;
  } else if (toggle == "-TargetNet") {
    t.use_target_network = false;
  } else {
    throw ConfigError("unknown toggle '" + std::string(toggle) + "'");
  }
}

std::vector<AblationVariant> ablation_suite(const RunConfig& base) {
  std::vector<AblationVariant> variants;
  for (const auto& name : ablation_toggle_names()) {
    RunConfig config = base;
    apply_toggle(config, name);
    variants.push_back({name, std::move(config)});
  }
  return variants;
}

}  // namespace bro::harness
