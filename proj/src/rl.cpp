#include "metasgd/rl.hpp"

#include <cmath>
#include <string>

namespace metasgd {

namespace {

double distance(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

void validate_mdp(const NavMdp& mdp) {
  if (mdp.horizon == 0) throw ShapeError("NavMdp: horizon must be at least 1");
  if (!(mdp.goal_threshold > 0.0)) throw ShapeError("NavMdp: goal threshold must be positive");
  if (!(mdp.gamma >= 0.0 && mdp.gamma <= 1.0)) throw ShapeError("NavMdp: gamma must be in [0, 1]");
}

}  // namespace

NavMdp sample_nav_task(NavMode mode, Rng& rng, std::size_t horizon, double goal_threshold,
                       double gamma) {
  NavMdp mdp;
  mdp.horizon = horizon;
  mdp.goal_threshold = goal_threshold;
  mdp.gamma = gamma;
  validate_mdp(mdp);
  if (mode == NavMode::RandomStart) {
    mdp.start[0] = rng.uniform(-0.5, 0.5);
    mdp.start[1] = rng.uniform(-0.5, 0.5);
  }
  mdp.goal[0] = rng.uniform(-0.5, 0.5);
  mdp.goal[1] = rng.uniform(-0.5, 0.5);
  return mdp;
}

std::pair<std::array<double, 2>, double> nav_step(const NavMdp& mdp,
                                                  const std::array<double, 2>& state,
                                                  const std::array<double, 2>& action) {
  if (!std::isfinite(action[0]) || !std::isfinite(action[1]))
    throw NumericError("nav_step: non-finite action");
  const std::array<double, 2> next{state[0] + action[0], state[1] + action[1]};
  return {next, -distance(next, mdp.goal)};
}

Trajectory rollout(const MlpSpec& spec, const ParamSet& policy, const NavMdp& mdp, Rng& rng) {
  validate_mdp(mdp);
  if (spec.layers.front() != 2 || spec.layers.back() != 2)
    throw ShapeError("rollout: policy must map 2 state dims to 2 action dims");
  const Tensor& log_var = policy.at("log_var");
  if (log_var.numel() != 2 || !log_var.all_finite())
    throw NumericError("rollout: degenerate log_var");
  const double sd0 = std::exp(0.5 * log_var[0]);
  const double sd1 = std::exp(0.5 * log_var[1]);

  Trajectory traj;
  std::array<double, 2> state = mdp.start;
  traj.states.push_back(state);
  while (traj.steps() < mdp.horizon && distance(state, mdp.goal) > mdp.goal_threshold) {
    const Tensor mean = forward_mlp_value(spec, policy, Tensor::matrix(1, 2, {state[0], state[1]}));
    if (!mean.all_finite()) throw NumericError("rollout: non-finite policy output");
    const std::array<double, 2> action{mean[0] + sd0 * rng.normal(),
                                       mean[1] + sd1 * rng.normal()};
    auto [next, reward] = nav_step(mdp, state, action);
    traj.actions.push_back(action);
    traj.rewards.push_back(reward);
    traj.states.push_back(next);
    state = next;
  }
  return traj;
}

double discounted_return(const Trajectory& traj, double gamma) {
  double total = 0.0, coef = 1.0;
  for (double r : traj.rewards) {
    total += coef * r;
    coef *= gamma;
  }
  return total;
}

ad::Var pg_surrogate_loss(std::span<const Trajectory> trajectories, const MlpSpec& spec,
                          const VarSet& policy, double gamma) {
  if (trajectories.empty()) throw ShapeError("pg_surrogate_loss: no trajectories");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ShapeError("pg_surrogate_loss: gamma must be in [0, 1]");
  std::size_t total = 0;
  for (const Trajectory& t : trajectories) {
    if (t.steps() == 0) throw ShapeError("pg_surrogate_loss: empty trajectory");
    if (t.states.size() != t.steps() + 1 || t.rewards.size() != t.steps())
      throw ShapeError("pg_surrogate_loss: inconsistent trajectory lengths");
    total += t.steps();
  }

  std::vector<double> xs(total * 2), as(total * 2), togo(total);
  std::size_t row = 0;
  for (const Trajectory& t : trajectories) {
    double g = 0.0;
    std::vector<double> traj_togo(t.steps());
    for (std::size_t i = t.steps(); i-- > 0;) {
      g = t.rewards[i] + gamma * g;
      traj_togo[i] = g;
    }
    for (std::size_t i = 0; i < t.steps(); ++i, ++row) {
      xs[row * 2] = t.states[i][0];
      xs[row * 2 + 1] = t.states[i][1];
      as[row * 2] = t.actions[i][0];
      as[row * 2 + 1] = t.actions[i][1];
      togo[row] = traj_togo[i];
    }
  }

  ad::Tape& tape = *policy.items.front().second.tape();
  const std::size_t d_out = spec.layers.back();
  ad::Var means = forward_mlp(spec, policy, ad::constant(tape, Tensor::matrix(total, 2, xs)));
  const ad::Var& log_var = policy.at("log_var");
  if (log_var.value().numel() != d_out)
    throw ShapeError("pg_surrogate_loss: log_var length does not match action dims");

  ad::Var diff = ad::sub(ad::constant(tape, Tensor::matrix(total, 2, as)), means);
  ad::Var inv_var = ad::recip(ad::exp(log_var));
  ad::Var quad = ad::row_sum(ad::mul(ad::square(diff), ad::repeat_row(inv_var, total)));
  const double log_2pi_terms = static_cast<double>(d_out) * std::log(2.0 * 3.14159265358979323846);
  ad::Var log_norm =
      ad::add(ad::sum(log_var), ad::constant(tape, Tensor::scalar(log_2pi_terms)));
  ad::Var log_probs =
      ad::scale(ad::add(quad, ad::broadcast_scalar(log_norm, {total})), -0.5);
  ad::Var weighted = ad::mul(log_probs, ad::constant(tape, Tensor::vector(std::move(togo))));
  return ad::scale(ad::sum(weighted), -1.0 / static_cast<double>(trajectories.size()));
}

}  // namespace metasgd
