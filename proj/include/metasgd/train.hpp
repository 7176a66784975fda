#pragma once

#include <functional>

#include "metasgd/metalearners.hpp"
#include "metasgd/rl.hpp"
#include "metasgd/tasks.hpp"

namespace metasgd {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;  // aligned with the parameter set entry order
  long step = 0;
};

AdamState init_adam(const ParamSet& params);

/// m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2; bias-corrected;
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

void sgd_step(ParamSet& params, const ParamSet& grads, double lr);

struct MetaTrainConfig {
  std::size_t iterations = 0;
  std::size_t meta_batch = 1;
  double outer_lr = 1e-3;
  bool use_adam = true;
  double lambda = 0.0;  // L2 coefficient on meta-parameters; 0 disables the term
  std::size_t log_interval = 1;
};

struct TrainRow {
  std::size_t iteration;
  double value;  // mean post-adaptation test loss, or mean return for RL
  double wall_ms;
};
using TrainLog = std::vector<TrainRow>;

/// Adapts to one task on the lifted meta-parameters and returns the
/// post-adaptation test loss, all on the meta_vars' tape.
using EpisodeLossFn = std::function<ad::Var(const VarSet& meta_vars, const FewShotTask& task)>;
using TaskSamplerFn = std::function<FewShotTask(Rng&)>;

/// Algorithm-1-style outer loop. Per iteration: sample meta_batch tasks; for
/// each, run the episode on a fresh tape and take the outer gradient of its
/// test loss with respect to the lifted meta-parameters; reduce the per-task
/// gradients by ordered summation (the outer objective is the batch SUM);
/// add 2*lambda*p when lambda > 0; one optimizer step. Logs the batch-mean
/// test loss every log_interval iterations.
TrainLog meta_train_supervised(ParamSet& meta, AdamState& opt, const EpisodeLossFn& episode,
                               const TaskSamplerFn& sampler, const MetaTrainConfig& cfg,
                               Rng& task_rng);

struct RlEpisodeResult {
  ad::Var post_loss;        // post-adaptation surrogate loss on the tape
  double mean_post_return;  // mean undiscounted return of the post rollouts
};
using RlEpisodeFn =
    std::function<RlEpisodeResult(const VarSet& meta_vars, const NavMdp& task, Rng& rollout_rng)>;
using NavSamplerFn = std::function<NavMdp(Rng&)>;

/// Algorithm-2-style outer loop; same reduction and optimizer step as the
/// supervised loop, logging the batch-mean post-adaptation return.
TrainLog meta_train_rl(ParamSet& meta, AdamState& opt, const RlEpisodeFn& episode,
                       const NavSamplerFn& sampler, const MetaTrainConfig& cfg, Rng& task_rng,
                       Rng& rollout_rng);

/// Adapts the policy to one task from its pre-adaptation trajectories and
/// returns the adapted parameter values.
using RlAdaptFn =
    std::function<ParamSet(const NavMdp& task, std::span<const Trajectory> pre_trajs)>;

struct RlEvalResult {
  std::vector<double> pre_returns;   // per task: mean return of the n1 pre-adaptation rollouts
  std::vector<double> post_returns;  // per task: mean return of n2 fresh post-adaptation rollouts
};

/// Meta-test protocol: per task, n1 rollouts with the meta-initialized
/// policy, one adaptation, n2 fresh rollouts; returns are undiscounted
/// reward sums.
RlEvalResult evaluate_rl(const MlpSpec& spec, const ParamSet& policy, const RlAdaptFn& adapt,
                         const NavSamplerFn& sampler, std::size_t n_tasks, std::size_t n1,
                         std::size_t n2, Rng& task_rng, Rng& rollout_rng);

}  // namespace metasgd
