#pragma once

#include <array>
#include <span>
#include <vector>

#include "metasgd/models.hpp"
#include "metasgd/rng.hpp"

namespace metasgd {

enum class NavMode { FixedStart, RandomStart };

struct NavMdp {
  std::array<double, 2> start{0.0, 0.0};
  std::array<double, 2> goal{0.0, 0.0};
  std::size_t horizon = 100;
  double goal_threshold = 0.01;
  double gamma = 0.99;
};

/// Fixed mode starts at the origin; random mode draws the start from the
/// unit square as well. Goals are always uniform in [-0.5, 0.5]^2.
NavMdp sample_nav_task(NavMode mode, Rng& rng, std::size_t horizon = 100,
                       double goal_threshold = 0.01, double gamma = 0.99);

struct Trajectory {
  std::vector<std::array<double, 2>> states;   // length steps + 1
  std::vector<std::array<double, 2>> actions;  // length steps
  std::vector<double> rewards;                 // length steps
  std::size_t steps() const { return actions.size(); }
};

/// next = state + action; reward = -||next - goal||.
std::pair<std::array<double, 2>, double> nav_step(const NavMdp& mdp,
                                                  const std::array<double, 2>& state,
                                                  const std::array<double, 2>& action);

/// Samples actions from N(mean(state), diag(exp(log_var))) until the agent
/// is within goal_threshold of the goal or the horizon is reached; the
/// threshold is also checked at the start, so a trajectory may have zero
/// steps. `policy` is an init_policy-shaped set (w0..b_last plus log_var).
Trajectory rollout(const MlpSpec& spec, const ParamSet& policy, const NavMdp& mdp, Rng& rng);

/// Sum of gamma^t * rewards[t]; gamma = 1 gives the plain return.
double discounted_return(const Trajectory& traj, double gamma);

/// REINFORCE surrogate: -(1/N) sum over trajectories and steps of
/// log pi(a_t | s_t) * G_t, with G_t the reward-to-go discounted by gamma
/// and log pi the diagonal-Gaussian log-density. Differentiating it once
/// gives the vanilla policy-gradient estimator; it stays differentiable for
/// meta-gradients. Requires at least one trajectory, each with >= 1 step.
ad::Var pg_surrogate_loss(std::span<const Trajectory> trajectories, const MlpSpec& spec,
                          const VarSet& policy, double gamma);

}  // namespace metasgd
