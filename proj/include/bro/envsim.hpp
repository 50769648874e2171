#pragma once

// Desk-scale continuous-control environments with analytic oracles.
//
// Every environment implements the Environment adapter contract: reset/step
// over its native action box, plus a spec() describing the box. The agent
// works in [-1, 1]^|A|; to_env_action() maps into the native box. Wrapping an
// external simulator only requires implementing Environment.

#include <memory>
#include <string>

#include "bro/networks.hpp"
#include "bro/rng.hpp"

namespace bro {

struct EnvSpec {
  int obs_dim = 1;
  int act_dim = 1;
  Vector<double> action_low;
  Vector<double> action_high;
  int max_episode_steps = 1;
};

struct StepResult {
  Vector<double> obs;
  double reward = 0.0;
  bool terminated = false;
  bool truncated = false;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vector<double> reset(Rng& rng) = 0;
  // Actions outside [action_low, action_high] are clipped; non-finite actions throw.
  virtual StepResult step(const Vector<double>& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

// Affine map from the agent's [-1, 1] box into the env's native box.
Vector<double> to_env_action(const EnvSpec& spec, const Vector<double>& normalized);
Vector<double> clip_action(const EnvSpec& spec, const Vector<double>& action);

// Classic swing-up pendulum. obs = (cos theta, sin theta, theta_dot); theta = 0 is upright.
// Native action: torque in [-2, 2]. Reward -(theta^2 + 0.1 theta_dot^2 + 0.001 u^2).
class PendulumEnv final : public Environment {
 public:
  static constexpr double kMaxSpeed = 8.0;
  static constexpr double kMaxTorque = 2.0;
  static constexpr double kDt = 0.05;
  static constexpr double kGravity = 10.0;
  static constexpr double kMass = 1.0;
  static constexpr double kLength = 1.0;

  explicit PendulumEnv(int max_episode_steps = 200);

  const EnvSpec& spec() const override { return spec_; }
  Vector<double> reset(Rng& rng) override;
  StepResult step(const Vector<double>& action) override;
  std::unique_ptr<Environment> clone() const override;

  void set_state(double theta, double theta_dot);
  double theta() const { return theta_; }
  double theta_dot() const { return theta_dot_; }
  Vector<double> observation() const;

 private:
  EnvSpec spec_;
  double theta_ = 0.0;
  double theta_dot_ = 0.0;
  int steps_ = 0;
};

struct LqrParams {
  Matrix<double> a;
  Matrix<double> b;
  Matrix<double> q;
  Matrix<double> r;
  double noise_std = 0.0;
  double x0_bound = 1.0;      // x0 ~ U(-x0_bound, x0_bound)^d
  double action_bound = 1.0;  // native box [-action_bound, action_bound]^m
  int max_episode_steps = 50;

  // d-dimensional system a*I, b*I, q*I, r*I.
  static LqrParams scalar_diagonal(int dim, double a, double b, double q, double r);
};

// x' = A x + B u + noise, reward -(x'Qx + u'Ru), truncation at max_episode_steps.
class LqrEnv final : public Environment {
 public:
  explicit LqrEnv(LqrParams params);

  const EnvSpec& spec() const override { return spec_; }
  Vector<double> reset(Rng& rng) override;
  StepResult step(const Vector<double>& action) override;
  std::unique_ptr<Environment> clone() const override;

  void set_state(const Vector<double>& x) { x_ = x; }
  const Vector<double>& state() const { return x_; }
  const LqrParams& params() const { return params_; }

 private:
  LqrParams params_;
  EnvSpec spec_;
  Vector<double> x_;
  Rng noise_rng_{0};
  int steps_ = 0;
};

// Single-step bandit with constant observation [1]; reward ~ N(mu - curvature |a|^2, sigma^2).
class GaussianBanditEnv final : public Environment {
 public:
  GaussianBanditEnv(double mu, double sigma, double curvature = 1.0, int act_dim = 1);

  const EnvSpec& spec() const override { return spec_; }
  Vector<double> reset(Rng& rng) override;
  StepResult step(const Vector<double>& action) override;
  std::unique_ptr<Environment> clone() const override;

  double mean_reward(const Vector<double>& action) const;
  double mu() const { return mu_; }
  double sigma() const { return sigma_; }

 private:
  double mu_;
  double sigma_;
  double curvature_;
  EnvSpec spec_;
  Rng noise_rng_{0};
};

struct LqrSolution {
  Matrix<double> gain;  // optimal policy u = -gain x
  Matrix<double> cost;  // Riccati fixed point P*
  int iterations = 0;
};

// Discrete-time Riccati iteration from P = Q to tolerance 1e-10.
// Throws DomainError when the iteration diverges or fails to converge.
LqrSolution lqr_oracle(const Matrix<double>& a, const Matrix<double>& b, const Matrix<double>& q,
                       const Matrix<double>& r, double tolerance = 1e-10,
                       int max_iterations = 1'000'000);

// Expected undiscounted episodic cost of u = -gain x (unclipped) over the
// env's horizon, with x0 uniform in the box and the env's process noise.
double lqr_expected_episode_cost(const LqrParams& params, const Matrix<double>& gain);
// Same for i.i.d. uniform random actions in the native box.
double lqr_random_policy_episode_cost(const LqrParams& params);

// mu + sigma * Phi^{-1}(level) for each level.
Vector<double> gaussian_bandit_quantiles(double mu, double sigma, const Vector<double>& levels);

// Named construction used by the harness ("pendulum", "lqr", "bandit").
struct EnvParams {
  std::string name = "pendulum";
  int pendulum_max_steps = 200;
  int lqr_dim = 1;
  double lqr_a = 1.0;
  double lqr_b = 1.0;
  double lqr_q = 1.0;
  double lqr_r = 1.0;
  double lqr_noise_std = 0.0;
  double lqr_x0_bound = 1.0;
  double lqr_action_bound = 1.0;
  int lqr_max_steps = 50;
  double bandit_mu = 1.0;
  double bandit_sigma = 0.5;
  double bandit_curvature = 1.0;

  bool operator==(const EnvParams&) const = default;
};

std::unique_ptr<Environment> make_env(const EnvParams& params);
LqrParams lqr_params_from(const EnvParams& params);

// Returns of a uniformly random policy and of the best-known policy; used to
// normalize scores to [0, 1] (1 = best).
struct ScoreBounds {
  double random_return;
  double best_return;
};
ScoreBounds score_bounds(const EnvParams& params);
double normalize_score(const ScoreBounds& bounds, double episode_return);

}  // namespace bro
