#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bro/agent.hpp"
#include "bro/distributional.hpp"
#include "bro/envsim.hpp"
#include "bro/errors.hpp"
#include "bro/harness/config.hpp"
#include "bro/harness/metrics.hpp"
#include "bro/harness/plots.hpp"
#include "bro/harness/stats.hpp"
#include "bro/harness/training.hpp"
#include "bro/networks.hpp"
#include "bro/policy.hpp"

namespace py = pybind11;
using namespace bro;

namespace {

py::dict record_to_dict(const harness::MetricRecord& r) {
  py::dict d;
  d["env_step"] = r.env_step;
  d["gradient_step"] = r.gradient_step;
  d["eval_return"] = r.eval_return;
  d["episode_returns"] = r.episode_returns;
  d["resets"] = r.resets;
  d["status"] = r.status;
  d["updates"] = r.diagnostics.updates;
  d["td_error"] = r.diagnostics.td_error;
  d["critic_loss"] = r.diagnostics.critic_loss;
  d["mean_q"] = r.diagnostics.mean_q;
  d["temperature"] = r.diagnostics.temperature;
  d["optimism"] = r.diagnostics.optimism;
  d["kl_weight"] = r.diagnostics.kl_weight;
  d["measured_kl"] = r.diagnostics.measured_kl;
  d["entropy"] = r.diagnostics.entropy;
  return d;
}

// Environment plus its own RNG, so Python callers only deal with seeds.
class PyEnv {
 public:
  PyEnv(const EnvParams& params, std::uint64_t seed) : env_(make_env(params)), rng_(seed) {}
  Vector<double> reset() { return env_->reset(rng_); }
  py::tuple step(const Vector<double>& action) {
    const StepResult r = env_->step(action);
    return py::make_tuple(r.obs, r.reward, r.terminated, r.truncated);
  }
  const EnvSpec& spec() const { return env_->spec(); }
  Vector<double> to_native(const Vector<double>& normalized) const {
    return to_env_action(env_->spec(), normalized);
  }

 private:
  std::unique_ptr<Environment> env_;
  Rng rng_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "BRO actor-critic core";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);

  // Distributional pieces.
  m.def("quantile_levels", &quantile_levels, py::arg("num_quantiles"));
  m.def(
      "quantile_huber_loss",
      [](const Vector<double>& pred, const Vector<double>& targets, double kappa) {
        return quantile_huber_loss(make_quantile_set(pred), targets, kappa);
      },
      py::arg("pred"), py::arg("targets"), py::arg("kappa") = kDefaultHuberKappa);
  auto ensemble = [](const Vector<double>& q1, const Vector<double>& q2) {
    return EnsembleQuantiles{make_quantile_set(q1), make_quantile_set(q2)};
  };
  m.def("ensemble_mean_q", [=](const Vector<double>& a, const Vector<double>& b) {
    return ensemble_mean_q(ensemble(a, b));
  });
  m.def("ensemble_min_per_quantile", [=](const Vector<double>& a, const Vector<double>& b) {
    return ensemble_min_per_quantile(ensemble(a, b)).values;
  });
  m.def("disagreement", [=](const Vector<double>& a, const Vector<double>& b) {
    return disagreement(ensemble(a, b));
  });
  m.def(
      "optimistic_q",
      [=](const Vector<double>& a, const Vector<double>& b, double beta) {
        return optimistic_q(ensemble(a, b), beta);
      },
      py::arg("q1"), py::arg("q2"), py::arg("optimism"));

  // Policy head.
  m.def(
      "squashed_log_prob",
      [](const Vector<double>& mean, const Vector<double>& log_std, const Vector<double>& action) {
        return log_prob(make_policy_output(mean, log_std), action);
      },
      py::arg("mean"), py::arg("log_std"), py::arg("action"));
  m.def(
      "gaussian_kl",
      [](const Vector<double>& m1, const Vector<double>& s1, const Vector<double>& m2,
         const Vector<double>& s2) {
        return kl_divergence(make_policy_output(m1, s1), make_policy_output(m2, s2));
      },
      py::arg("mean_p"), py::arg("log_std_p"), py::arg("mean_q"), py::arg("log_std_q"));

  // Networks.
  m.def(
      "count_params",
      [](int input_dim, int hidden_size, int num_blocks, int output_dim) {
        return count_params({input_dim, hidden_size, num_blocks, output_dim});
      },
      py::arg("input_dim"), py::arg("hidden_size"), py::arg("num_blocks"), py::arg("output_dim"));

  // Dual-variable steps and critic target.
  m.def("optimism_step", &dual::optimism_step, py::arg("optimism"), py::arg("pessimism_floor"),
        py::arg("kl_per_dim"), py::arg("kl_target"), py::arg("lr"));
  m.def("kl_weight_step", &dual::kl_weight_step, py::arg("kl_weight"), py::arg("kl_per_dim"),
        py::arg("kl_target"), py::arg("lr"));
  m.def("temperature_step", &dual::temperature_step, py::arg("log_temperature"),
        py::arg("entropy"), py::arg("target_entropy"), py::arg("lr"));
  m.def(
      "critic_target",
      [](double reward, bool terminated, const Vector<double>& next_quantiles, double next_log_prob,
         double temperature, double discount) {
        const Matrix<double> y = critic_target_from<double>(
            RowArray<double>::Constant(1, reward), RowArray<double>::Constant(1, terminated ? 1.0 : 0.0),
            next_quantiles, RowArray<double>::Constant(1, next_log_prob), temperature, discount);
        return Vector<double>(y.col(0));
      },
      py::arg("reward"), py::arg("terminated"), py::arg("next_quantiles"), py::arg("next_log_prob"),
      py::arg("temperature"), py::arg("discount") = 0.99);

  // Environments and oracles.
  py::class_<EnvParams>(m, "EnvParams")
      .def(py::init<>())
      .def_readwrite("name", &EnvParams::name)
      .def_readwrite("pendulum_max_steps", &EnvParams::pendulum_max_steps)
      .def_readwrite("lqr_dim", &EnvParams::lqr_dim)
      .def_readwrite("lqr_a", &EnvParams::lqr_a)
      .def_readwrite("lqr_b", &EnvParams::lqr_b)
      .def_readwrite("lqr_q", &EnvParams::lqr_q)
      .def_readwrite("lqr_r", &EnvParams::lqr_r)
      .def_readwrite("lqr_max_steps", &EnvParams::lqr_max_steps)
      .def_readwrite("bandit_mu", &EnvParams::bandit_mu)
      .def_readwrite("bandit_sigma", &EnvParams::bandit_sigma);
  py::class_<EnvSpec>(m, "EnvSpec")
      .def_readonly("obs_dim", &EnvSpec::obs_dim)
      .def_readonly("act_dim", &EnvSpec::act_dim)
      .def_readonly("action_low", &EnvSpec::action_low)
      .def_readonly("action_high", &EnvSpec::action_high)
      .def_readonly("max_episode_steps", &EnvSpec::max_episode_steps);
  py::class_<PyEnv>(m, "Env")
      .def(py::init<const EnvParams&, std::uint64_t>(), py::arg("params"), py::arg("seed") = 0)
      .def("reset", &PyEnv::reset)
      .def("step", &PyEnv::step, py::arg("action"),
           "Returns (obs, reward, terminated, truncated).")
      .def("to_native", &PyEnv::to_native, py::arg("normalized"))
      .def_property_readonly("spec", &PyEnv::spec, py::return_value_policy::reference_internal);
  m.def(
      "lqr_oracle",
      [](const Matrix<double>& a, const Matrix<double>& b, const Matrix<double>& q,
         const Matrix<double>& r) {
        const LqrSolution s = lqr_oracle(a, b, q, r);
        return py::make_tuple(s.gain, s.cost);
      },
      py::arg("a"), py::arg("b"), py::arg("q"), py::arg("r"), "Returns (gain, cost-to-go matrix).");
  m.def("gaussian_bandit_quantiles", &gaussian_bandit_quantiles, py::arg("mu"), py::arg("sigma"),
        py::arg("levels"));

  // Statistics.
  m.def("iqm", py::overload_cast<std::vector<double>>(&harness::iqm), py::arg("scores"));
  m.def(
      "bootstrap_ci",
      [](const Eigen::MatrixXd& scores, int n_boot, double level, std::uint64_t seed) {
        Rng rng(seed);
        const auto ci = harness::bootstrap_ci(scores, n_boot, level, rng);
        return py::make_tuple(ci.low, ci.high);
      },
      py::arg("scores"), py::arg("n_boot") = harness::kDefaultBootstrapSamples,
      py::arg("level") = 0.95, py::arg("seed") = 0);

  // Harness.
  m.def(
      "default_config_json",
      []() { return harness::to_json(harness::RunConfig{}); });
  m.def(
      "ablation_suite",
      [](const std::string& base_json) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& v : harness::ablation_suite(harness::run_config_from_json(base_json))) {
          out.emplace_back(v.name, harness::to_json(v.config));
        }
        return out;
      },
      py::arg("base_config_json"), "List of (toggle name, config JSON).");
  m.def(
      "run_training",
      [](const std::string& config_json) {
        harness::TrainingResult result;
        {
          py::gil_scoped_release release;
          result = harness::run_training(harness::run_config_from_json(config_json));
        }
        py::list records;
        for (const auto& r : result.records) records.append(record_to_dict(r));
        return records;
      },
      py::arg("config_json"), "Runs training and returns the metric records as dicts.");
  m.def(
      "read_metrics",
      [](const std::filesystem::path& path) {
        py::list records;
        for (const auto& r : harness::read_metrics(path)) records.append(record_to_dict(r));
        return records;
      },
      py::arg("path"));
  m.def(
      "emit_plots",
      [](const std::vector<std::filesystem::path>& files, const std::filesystem::path& out_dir,
         const std::string& base_label) {
        harness::PlotOptions options;
        options.base_label = base_label;
        return harness::emit_plots(files, out_dir, options).files;
      },
      py::arg("metrics_files"), py::arg("out_dir"), py::arg("base_label") = "bro",
      "Writes the plots and returns the paths of the files written.");
}
