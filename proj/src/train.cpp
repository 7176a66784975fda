#include "metasgd/train.hpp"

#include <cmath>
#include <string>

namespace metasgd {

namespace {

void check_aligned(const ParamSet& params, const ParamSet& grads) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer: gradient set size does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.items[i].first != grads.items[i].first ||
        !params.items[i].second.same_dims(grads.items[i].second))
      throw ShapeError("optimizer: gradient entry '" + grads.items[i].first +
                       "' does not mirror parameters");
  }
}

void accumulate(ParamSet& acc, const std::vector<ad::Var>& grads) {
  for (std::size_t i = 0; i < acc.size(); ++i) {
    Tensor& dst = acc.items[i].second;
    const Tensor& src = grads[i].value();
    if (!dst.same_dims(src)) throw ShapeError("gradient accumulation: dims mismatch");
    for (std::size_t j = 0; j < dst.numel(); ++j) dst[j] += src[j];
  }
}

void add_l2_gradient(ParamSet& acc, const ParamSet& meta, double lambda) {
  for (std::size_t i = 0; i < acc.size(); ++i) {
    Tensor& dst = acc.items[i].second;
    const Tensor& p = meta.items[i].second;
    for (std::size_t j = 0; j < dst.numel(); ++j) dst[j] += 2.0 * lambda * p[j];
  }
}

void outer_step(ParamSet& meta, const ParamSet& grads, AdamState& opt, const MetaTrainConfig& cfg) {
  if (cfg.use_adam)
    adam_step(meta, grads, opt, cfg.outer_lr);
  else
    sgd_step(meta, grads, cfg.outer_lr);
}

void validate_train_config(const MetaTrainConfig& cfg) {
  if (cfg.meta_batch == 0) throw ShapeError("meta_batch must be at least 1");
  if (!(cfg.outer_lr > 0.0)) throw ShapeError("outer_lr must be positive");
  if (cfg.lambda < 0.0) throw ShapeError("lambda must be nonnegative");
  if (cfg.log_interval == 0) throw ShapeError("log_interval must be at least 1");
}

}  // namespace

AdamState init_adam(const ParamSet& params) {
  AdamState state;
  state.m.reserve(params.size());
  state.v.reserve(params.size());
  for (const auto& [name, t] : params.items) {
    state.m.push_back(Tensor::zeros(t.dims()));
    state.v.push_back(Tensor::zeros(t.dims()));
  }
  return state;
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  check_aligned(params, grads);
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: state does not match parameters");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.items[i].second;
    const Tensor& g = grads.items[i].second;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.numel(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

void sgd_step(ParamSet& params, const ParamSet& grads, double lr) {
  check_aligned(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params.items[i].second;
    const Tensor& g = grads.items[i].second;
    for (std::size_t j = 0; j < p.numel(); ++j) p[j] -= lr * g[j];
  }
}

TrainLog meta_train_supervised(ParamSet& meta, AdamState& opt, const EpisodeLossFn& episode,
                               const TaskSamplerFn& sampler, const MetaTrainConfig& cfg,
                               Rng& task_rng) {
  validate_train_config(cfg);
  TrainLog log;
  ad::Tape tape;
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    ParamSet grad_sum = like_filled(meta, 0.0);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < cfg.meta_batch; ++b) {
      const FewShotTask task = sampler(task_rng);
      tape.clear();
      VarSet meta_vars = lift(tape, meta, true);
      ad::Var test_loss = episode(meta_vars, task);
      const double value = test_loss.value().numel() == 1 ? test_loss.value()[0] : NAN;
      if (!std::isfinite(value))
        throw NumericError("non-finite outer loss at iteration " + std::to_string(iter + 1));
      loss_sum += value;
      std::vector<ad::Var> leaves;
      for (const auto& [name, v] : meta_vars.items) leaves.push_back(v);
      accumulate(grad_sum, ad::grad(test_loss, leaves, false));
    }
    if (cfg.lambda > 0.0) add_l2_gradient(grad_sum, meta, cfg.lambda);
    outer_step(meta, grad_sum, opt, cfg);
    if ((iter + 1) % cfg.log_interval == 0)
      log.push_back({iter + 1, loss_sum / static_cast<double>(cfg.meta_batch), 0.0});
  }
  return log;
}

TrainLog meta_train_rl(ParamSet& meta, AdamState& opt, const RlEpisodeFn& episode,
                       const NavSamplerFn& sampler, const MetaTrainConfig& cfg, Rng& task_rng,
                       Rng& rollout_rng) {
  validate_train_config(cfg);
  TrainLog log;
  ad::Tape tape;
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    ParamSet grad_sum = like_filled(meta, 0.0);
    double return_sum = 0.0;
    for (std::size_t b = 0; b < cfg.meta_batch; ++b) {
      const NavMdp task = sampler(task_rng);
      tape.clear();
      VarSet meta_vars = lift(tape, meta, true);
      RlEpisodeResult ep = episode(meta_vars, task, rollout_rng);
      const double value = ep.post_loss.value().numel() == 1 ? ep.post_loss.value()[0] : NAN;
      if (!std::isfinite(value))
        throw NumericError("non-finite outer loss at iteration " + std::to_string(iter + 1));
      return_sum += ep.mean_post_return;
      std::vector<ad::Var> leaves;
      for (const auto& [name, v] : meta_vars.items) leaves.push_back(v);
      accumulate(grad_sum, ad::grad(ep.post_loss, leaves, false));
    }
    if (cfg.lambda > 0.0) add_l2_gradient(grad_sum, meta, cfg.lambda);
    outer_step(meta, grad_sum, opt, cfg);
    if ((iter + 1) % cfg.log_interval == 0)
      log.push_back({iter + 1, return_sum / static_cast<double>(cfg.meta_batch), 0.0});
  }
  return log;
}

RlEvalResult evaluate_rl(const MlpSpec& spec, const ParamSet& policy, const RlAdaptFn& adapt,
                         const NavSamplerFn& sampler, std::size_t n_tasks, std::size_t n1,
                         std::size_t n2, Rng& task_rng, Rng& rollout_rng) {
  if (n_tasks == 0 || n1 == 0 || n2 == 0)
    throw ShapeError("evaluate_rl: task and rollout counts must be positive");
  RlEvalResult result;
  result.pre_returns.reserve(n_tasks);
  result.post_returns.reserve(n_tasks);
  for (std::size_t t = 0; t < n_tasks; ++t) {
    const NavMdp task = sampler(task_rng);
    std::vector<Trajectory> pre(n1);
    double pre_sum = 0.0;
    for (std::size_t i = 0; i < n1; ++i) {
      pre[i] = rollout(spec, policy, task, rollout_rng);
      pre_sum += discounted_return(pre[i], 1.0);
    }
    const ParamSet adapted = adapt(task, pre);
    double post_sum = 0.0;
    for (std::size_t i = 0; i < n2; ++i)
      post_sum += discounted_return(rollout(spec, adapted, task, rollout_rng), 1.0);
    result.pre_returns.push_back(pre_sum / static_cast<double>(n1));
    result.post_returns.push_back(post_sum / static_cast<double>(n2));
  }
  return result;
}

}  // namespace metasgd
