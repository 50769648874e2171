#include "bro/envsim.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/distributions/normal.hpp>

#include "bro/errors.hpp"

namespace bro {

namespace {

void check_action(const EnvSpec& spec, const Vector<double>& action) {
  require_shape(action.size() == spec.act_dim, "action width does not match the env spec");
  require_domain(action.allFinite(), "action contains non-finite values");
}

double wrap_angle(double theta) {
  return std::remainder(theta, 2.0 * std::numbers::pi);
}

}  // namespace

Vector<double> to_env_action(const EnvSpec& spec, const Vector<double>& normalized) {
  check_action(spec, normalized);
  const Vector<double> clipped = normalized.cwiseMax(-1.0).cwiseMin(1.0);
  return spec.action_low +
         (0.5 * (clipped.array() + 1.0) * (spec.action_high - spec.action_low).array()).matrix();
}

Vector<double> clip_action(const EnvSpec& spec, const Vector<double>& action) {
  return action.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
}

// ---------------------------------------------------------------- pendulum

PendulumEnv::PendulumEnv(int max_episode_steps) {
  require_domain(max_episode_steps >= 1, "max_episode_steps must be >= 1");
  spec_.obs_dim = 3;
  spec_.act_dim = 1;
  spec_.action_low = Vector<double>::Constant(1, -kMaxTorque);
  spec_.action_high = Vector<double>::Constant(1, kMaxTorque);
  spec_.max_episode_steps = max_episode_steps;
}

Vector<double> PendulumEnv::observation() const {
  Vector<double> obs(3);
  obs << std::cos(theta_), std::sin(theta_), theta_dot_;
  return obs;
}

void PendulumEnv::set_state(double theta, double theta_dot) {
  theta_ = theta;
  theta_dot_ = theta_dot;
}

Vector<double> PendulumEnv::reset(Rng& rng) {
  theta_ = rng.uniform(-std::numbers::pi, std::numbers::pi);
  theta_dot_ = rng.uniform(-1.0, 1.0);
  steps_ = 0;
  return observation();
}

StepResult PendulumEnv::step(const Vector<double>& action) {
  check_action(spec_, action);
  const double u = clip_action(spec_, action)(0);
  const double angle = wrap_angle(theta_);
  const double cost = angle * angle + 0.1 * theta_dot_ * theta_dot_ + 0.001 * u * u;

  double next_dot = theta_dot_ + (3.0 * kGravity / (2.0 * kLength) * std::sin(theta_) +
                                  3.0 / (kMass * kLength * kLength) * u) *
                                     kDt;
  next_dot = std::clamp(next_dot, -kMaxSpeed, kMaxSpeed);
  theta_ = wrap_angle(theta_ + next_dot * kDt);
  theta_dot_ = next_dot;
  ++steps_;
  return {observation(), -cost, false, steps_ >= spec_.max_episode_steps};
}

std::unique_ptr<Environment> PendulumEnv::clone() const {
  return std::make_unique<PendulumEnv>(*this);
}

// ---------------------------------------------------------------- LQR

LqrParams LqrParams::scalar_diagonal(int dim, double a, double b, double q, double r) {
  LqrParams p;
  const auto eye = Matrix<double>::Identity(dim, dim);
  p.a = a * eye;
  p.b = b * eye;
  p.q = q * eye;
  p.r = r * eye;
  return p;
}

LqrEnv::LqrEnv(LqrParams params) : params_(std::move(params)) {
  const auto d = params_.a.rows();
  const auto m = params_.b.cols();
  require_shape(params_.a.cols() == d && params_.b.rows() == d && params_.q.rows() == d &&
                    params_.q.cols() == d && params_.r.rows() == m && params_.r.cols() == m,
                "LQR matrices have inconsistent shapes");
  require_domain(params_.action_bound > 0.0 && params_.x0_bound >= 0.0 &&
                     params_.noise_std >= 0.0 && params_.max_episode_steps >= 1,
                 "invalid LQR environment parameters");
  spec_.obs_dim = static_cast<int>(d);
  spec_.act_dim = static_cast<int>(m);
  spec_.action_low = Vector<double>::Constant(m, -params_.action_bound);
  spec_.action_high = Vector<double>::Constant(m, params_.action_bound);
  spec_.max_episode_steps = params_.max_episode_steps;
  x_ = Vector<double>::Zero(d);
}

Vector<double> LqrEnv::reset(Rng& rng) {
  for (auto& v : x_) v = rng.uniform(-params_.x0_bound, params_.x0_bound);
  noise_rng_ = Rng(rng.index(std::uint64_t{1} << 62));
  steps_ = 0;
  return x_;
}

StepResult LqrEnv::step(const Vector<double>& action) {
  check_action(spec_, action);
  const Vector<double> u = clip_action(spec_, action);
  const double cost = x_.dot(params_.q * x_) + u.dot(params_.r * u);
  Vector<double> next = params_.a * x_ + params_.b * u;
  if (params_.noise_std > 0.0) {
    for (auto& v : next) v += params_.noise_std * noise_rng_.normal();
  }
  x_ = next;
  ++steps_;
  return {x_, -cost, false, steps_ >= spec_.max_episode_steps};
}

std::unique_ptr<Environment> LqrEnv::clone() const { return std::make_unique<LqrEnv>(*this); }

LqrSolution lqr_oracle(const Matrix<double>& a, const Matrix<double>& b, const Matrix<double>& q,
                       const Matrix<double>& r, double tolerance, int max_iterations) {
  const auto d = a.rows();
  require_shape(a.cols() == d && b.rows() == d && q.rows() == d && q.cols() == d &&
                    r.rows() == b.cols() && r.cols() == b.cols(),
                "lqr_oracle: inconsistent matrix shapes");
  Matrix<double> p = q;
  for (int it = 1; it <= max_iterations; ++it) {
    const Matrix<double> pa = p * a;
    const Matrix<double> pb = p * b;
    const Matrix<double> s = r + b.transpose() * pb;
    const Matrix<double> gain = s.ldlt().solve(b.transpose() * pa);
    Matrix<double> next = q + a.transpose() * pa - a.transpose() * pb * gain;
    next = 0.5 * (next + next.transpose());
    require_domain(next.allFinite() && next.norm() < 1e12,
                   "lqr_oracle: Riccati iteration diverged (system not stabilizable?)");
    const double delta = (next - p).cwiseAbs().maxCoeff();
    p = std::move(next);
    if (delta < tolerance) {
      const Matrix<double> k = (r + b.transpose() * p * b).ldlt().solve(b.transpose() * p * a);
      return {k, p, it};
    }
  }
  throw DomainError("lqr_oracle: Riccati iteration did not converge");
}

double lqr_expected_episode_cost(const LqrParams& params, const Matrix<double>& gain) {
  const auto d = params.a.rows();
  const Matrix<double> closed = params.a - params.b * gain;
  const Matrix<double> stage = params.q + gain.transpose() * params.r * gain;
  Matrix<double> cov = (params.x0_bound * params.x0_bound / 3.0) * Matrix<double>::Identity(d, d);
  const Matrix<double> noise =
      params.noise_std * params.noise_std * Matrix<double>::Identity(d, d);
  double total = 0.0;
  for (int t = 0; t < params.max_episode_steps; ++t) {
    total += (stage * cov).trace();
    cov = closed * cov * closed.transpose() + noise;
  }
  return total;
}

double lqr_random_policy_episode_cost(const LqrParams& params) {
  const auto d = params.a.rows();
  const double action_var = params.action_bound * params.action_bound / 3.0;
  Matrix<double> cov = (params.x0_bound * params.x0_bound / 3.0) * Matrix<double>::Identity(d, d);
  const Matrix<double> drive = action_var * params.b * params.b.transpose() +
                               params.noise_std * params.noise_std * Matrix<double>::Identity(d, d);
  double total = 0.0;
  for (int t = 0; t < params.max_episode_steps; ++t) {
    total += (params.q * cov).trace() + action_var * params.r.trace();
    cov = params.a * cov * params.a.transpose() + drive;
  }
  return total;
}

// ---------------------------------------------------------------- bandit

GaussianBanditEnv::GaussianBanditEnv(double mu, double sigma, double curvature, int act_dim)
    : mu_(mu), sigma_(sigma), curvature_(curvature) {
  require_domain(sigma >= 0.0, "bandit sigma must be >= 0");
  require_shape(act_dim >= 1, "bandit act_dim must be >= 1");
  spec_.obs_dim = 1;
  spec_.act_dim = act_dim;
  spec_.action_low = Vector<double>::Constant(act_dim, -1.0);
  spec_.action_high = Vector<double>::Constant(act_dim, 1.0);
  spec_.max_episode_steps = 1;
}

Vector<double> GaussianBanditEnv::reset(Rng& rng) {
  noise_rng_ = Rng(rng.index(std::uint64_t{1} << 62));
  return Vector<double>::Ones(1);
}

double GaussianBanditEnv::mean_reward(const Vector<double>& action) const {
  return mu_ - curvature_ * clip_action(spec_, action).squaredNorm();
}

StepResult GaussianBanditEnv::step(const Vector<double>& action) {
  check_action(spec_, action);
  double reward = mean_reward(action);
  if (sigma_ > 0.0) reward += sigma_ * noise_rng_.normal();
  return {Vector<double>::Ones(1), reward, true, false};
}

std::unique_ptr<Environment> GaussianBanditEnv::clone() const {
  return std::make_unique<GaussianBanditEnv>(*this);
}

Vector<double> gaussian_bandit_quantiles(double mu, double sigma, const Vector<double>& levels) {
  require_domain(sigma >= 0.0, "sigma must be >= 0");
  Vector<double> out(levels.size());
  if (sigma == 0.0) return out.setConstant(mu);
  const boost::math::normal_distribution<double> standard(0.0, 1.0);
  for (Eigen::Index k = 0; k < levels.size(); ++k) {
    require_domain(levels(k) > 0.0 && levels(k) < 1.0, "quantile levels must lie in (0, 1)");
    out(k) = mu + sigma * boost::math::quantile(standard, levels(k));
  }
  return out;
}

// ---------------------------------------------------------------- factory

LqrParams lqr_params_from(const EnvParams& params) {
  LqrParams p = LqrParams::scalar_diagonal(params.lqr_dim, params.lqr_a, params.lqr_b,
                                           params.lqr_q, params.lqr_r);
  p.noise_std = params.lqr_noise_std;
  p.x0_bound = params.lqr_x0_bound;
  p.action_bound = params.lqr_action_bound;
  p.max_episode_steps = params.lqr_max_steps;
  return p;
}

std::unique_ptr<Environment> make_env(const EnvParams& params) {
  if (params.name == "pendulum") return std::make_unique<PendulumEnv>(params.pendulum_max_steps);
  if (params.name == "lqr") return std::make_unique<LqrEnv>(lqr_params_from(params));
  if (params.name == "bandit") {
    return std::make_unique<GaussianBanditEnv>(params.bandit_mu, params.bandit_sigma,
                                               params.bandit_curvature);
  }
  throw DomainError("unknown environment '" + params.name + "'");
}

// Pendulum constants: the random-policy mean return measured over 1000
// episodes (see tests/unit/test_envsim.cpp) and the commonly reported
// near-optimal swing-up return.
inline constexpr double kPendulumRandomReturn = -1200.0;
inline constexpr double kPendulumBestReturn = -140.0;

ScoreBounds score_bounds(const EnvParams& params) {
  if (params.name == "pendulum") {
    const double scale = params.pendulum_max_steps / 200.0;
    return {kPendulumRandomReturn * scale, kPendulumBestReturn * scale};
  }
  if (params.name == "lqr") {
    const LqrParams p = lqr_params_from(params);
    const LqrSolution oracle = lqr_oracle(p.a, p.b, p.q, p.r);
    return {-lqr_random_policy_episode_cost(p), -lqr_expected_episode_cost(p, oracle.gain)};
  }
  if (params.name == "bandit") {
    return {params.bandit_mu - params.bandit_curvature / 3.0, params.bandit_mu};
  }
  throw DomainError("unknown environment '" + params.name + "'");
}

double normalize_score(const ScoreBounds& bounds, double episode_return) {
  return (episode_return - bounds.random_return) / (bounds.best_return - bounds.random_return);
}

}  // namespace bro
