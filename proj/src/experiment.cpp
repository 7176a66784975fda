#include "metasgd/experiment.hpp"

#include "metasgd/checkpoint.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>
#include <span>

namespace metasgd {

namespace {

/// Current learner values under their unprefixed names.
struct LearnerView {
  ParamSet theta, alpha, phi;
};

LearnerView view_of(const MetaState& state) {
  LearnerView v;
  v.theta = subset_with_prefix(state.params, "theta.");
  v.alpha = subset_with_prefix(state.params, "alpha.");
  if (v.alpha.size() == 0) v.alpha = subset_with_prefix(state.frozen, "alpha.");
  v.phi = subset_with_prefix(state.params, "phi.");
  return v;
}

std::size_t theta2_numel(const MlpSpec& spec, std::size_t split_layer) {
  std::size_t n = 0;
  for (std::size_t i = split_layer; i + 1 < spec.layers.size(); ++i)
    n += spec.layers[i] * spec.layers[i + 1] + spec.layers[i + 1];
  return n;
}

bool is_nav(ExperimentKind e) {
  return e == ExperimentKind::NavFixed || e == ExperimentKind::NavRandom;
}

/// Adapts to one supervised task with whatever learner cfg selects, on a
/// fresh tape, and returns the adapted values. Sampling-independent: the
/// caller provides the train set.
ParamSet adapt_supervised(const RunConfig& cfg, const LearnerView& view, const Tensor& train_x,
                          const Tensor& train_y) {
  ad::Tape tape;
  const bool classify = cfg.experiment == ExperimentKind::Cluster;
  const LossBuilder loss = classify ? make_ce_loss(cfg.model, train_x, train_y)
                                    : make_mse_loss(cfg.model, train_x, train_y);
  switch (cfg.meta_learner) {
    case MetaLearnerKind::MetaSgd: {
      VarSet theta = lift(tape, view.theta, true);
      VarSet alpha = lift(tape, view.alpha, false);
      return values_of(meta_sgd_adapt(theta, alpha, loss, cfg.inner_steps, false).adapted);
    }
    case MetaLearnerKind::Maml: {
      VarSet theta = lift(tape, view.theta, true);
      return values_of(maml_adapt(theta, cfg.maml_alpha, cfg.inner_steps, loss, false).adapted);
    }
    case MetaLearnerKind::LrLstm: {
      const std::size_t boundary = 2 * cfg.lstm_split_layer;
      VarSet phi = lift(tape, view.phi, false);
      VarSet th1 = lift(tape, subset_range(view.theta, 0, boundary), false);
      VarSet th2 = lift(tape, subset_range(view.theta, boundary, view.theta.size()), true);
      return values_of(lstm_adapt(phi, th1, th2, loss, cfg.lstm_steps, cfg.lstm_beta,
                                  cfg.lstm_hidden, false)
                           .adapted);
    }
  }
  throw ShapeError("unknown meta-learner");
}

EpisodeLossFn make_supervised_episode(const RunConfig& cfg, const ParamSet& frozen) {
  const ParamSet frozen_alpha = subset_with_prefix(frozen, "alpha.");
  return [cfg, frozen_alpha](const VarSet& meta_vars, const FewShotTask& task) -> ad::Var {
    const bool classify = cfg.experiment == ExperimentKind::Cluster;
    const LossBuilder train_loss = classify ? make_ce_loss(cfg.model, task.train_x, task.train_y)
                                            : make_mse_loss(cfg.model, task.train_x, task.train_y);
    const LossBuilder test_loss = classify ? make_ce_loss(cfg.model, task.test_x, task.test_y)
                                           : make_mse_loss(cfg.model, task.test_x, task.test_y);
    VarSet theta = subset_with_prefix(meta_vars, "theta.");
    const bool create_graph = !cfg.first_order;
    AdaptResult r;
    switch (cfg.meta_learner) {
      case MetaLearnerKind::MetaSgd: {
        VarSet alpha = cfg.alpha_learn
                           ? subset_with_prefix(meta_vars, "alpha.")
                           : lift(*theta.items.front().second.tape(), frozen_alpha, false);
        r = meta_sgd_adapt(theta, alpha, train_loss, cfg.inner_steps, create_graph);
        break;
      }
      case MetaLearnerKind::Maml:
        r = maml_adapt(theta, cfg.maml_alpha, cfg.inner_steps, train_loss, create_graph);
        break;
      case MetaLearnerKind::LrLstm: {
        const std::size_t boundary = 2 * cfg.lstm_split_layer;
        VarSet phi = subset_with_prefix(meta_vars, "phi.");
        VarSet th1 = subset_range(theta, 0, boundary);
        VarSet th2 = subset_range(theta, boundary, theta.size());
        r = lstm_adapt(phi, th1, th2, train_loss, cfg.lstm_steps, cfg.lstm_beta, cfg.lstm_hidden,
                       create_graph);
        break;
      }
    }
    return meta_loss(r, test_loss);
  };
}

/// Tasks whose start is already inside the goal threshold carry no gradient
/// signal (every trajectory would have zero steps), so the sampler redraws
/// them.
NavSamplerFn make_nav_sampler(const RunConfig& cfg) {
  const NavMode mode =
      cfg.experiment == ExperimentKind::NavRandom ? NavMode::RandomStart : NavMode::FixedStart;
  return [mode, cfg](Rng& rng) {
    for (;;) {
      NavMdp task = sample_nav_task(mode, rng, cfg.nav_horizon, cfg.nav_threshold, cfg.nav_gamma);
      const double dx = task.start[0] - task.goal[0];
      const double dy = task.start[1] - task.goal[1];
      if (std::hypot(dx, dy) > task.goal_threshold) return task;
    }
  };
}

ParamSet adapt_policy(const RunConfig& cfg, const LearnerView& view,
                      std::span<const Trajectory> pre_trajs) {
  ad::Tape tape;
  const std::vector<Trajectory> pre(pre_trajs.begin(), pre_trajs.end());
  const MlpSpec spec = cfg.model;
  const double gamma = cfg.nav_gamma;
  const LossBuilder loss = [pre, spec, gamma](const VarSet& p) {
    return pg_surrogate_loss(std::span<const Trajectory>(pre), spec, p, gamma);
  };
  VarSet theta = lift(tape, view.theta, true);
  if (cfg.meta_learner == MetaLearnerKind::Maml)
    return values_of(maml_adapt(theta, cfg.maml_alpha, cfg.inner_steps, loss, false).adapted);
  VarSet alpha = lift(tape, view.alpha, false);
  return values_of(meta_sgd_adapt(theta, alpha, loss, cfg.inner_steps, false).adapted);
}

RlEpisodeFn make_nav_episode(const RunConfig& cfg, const ParamSet& frozen) {
  const ParamSet frozen_alpha = subset_with_prefix(frozen, "alpha.");
  return [cfg, frozen_alpha](const VarSet& meta_vars, const NavMdp& task,
                             Rng& rollout_rng) -> RlEpisodeResult {
    const MlpSpec& spec = cfg.model;
    VarSet theta = subset_with_prefix(meta_vars, "theta.");
    const ParamSet theta_vals = values_of(theta);

    std::vector<Trajectory> pre(cfg.nav_n1);
    for (auto& t : pre) t = rollout(spec, theta_vals, task, rollout_rng);
    const double gamma = cfg.nav_gamma;
    const LossBuilder inner = [&pre, &spec, gamma](const VarSet& p) {
      return pg_surrogate_loss(std::span<const Trajectory>(pre), spec, p, gamma);
    };

    const bool create_graph = !cfg.first_order;
    AdaptResult r;
    if (cfg.meta_learner == MetaLearnerKind::Maml) {
      r = maml_adapt(theta, cfg.maml_alpha, cfg.inner_steps, inner, create_graph);
    } else {
      VarSet alpha = cfg.alpha_learn
                         ? subset_with_prefix(meta_vars, "alpha.")
                         : lift(*theta.items.front().second.tape(), frozen_alpha, false);
      r = meta_sgd_adapt(theta, alpha, inner, cfg.inner_steps, create_graph);
    }

    const ParamSet adapted_vals = values_of(r.adapted);
    std::vector<Trajectory> post(cfg.nav_n2);
    double return_sum = 0.0;
    for (auto& t : post) {
      t = rollout(spec, adapted_vals, task, rollout_rng);
      return_sum += discounted_return(t, 1.0);
    }
    RlEpisodeResult result;
    result.post_loss = pg_surrogate_loss(std::span<const Trajectory>(post), spec, r.adapted, gamma);
    result.mean_post_return = return_sum / static_cast<double>(cfg.nav_n2);
    return result;
  };
}

RegressionAdapter make_regression_adapter(const RunConfig& cfg, const LearnerView& view) {
  return [cfg, view](const Tensor& train_x, const Tensor& train_y, const Tensor& grid_x) {
    return forward_mlp_value(cfg.model, adapt_supervised(cfg, view, train_x, train_y), grid_x);
  };
}

ClassificationAdapter make_classification_adapter(const RunConfig& cfg, const LearnerView& view) {
  return [cfg, view](const Tensor& train_x, const Tensor& train_y, const Tensor& test_x) {
    return forward_mlp_value(cfg.model, adapt_supervised(cfg, view, train_x, train_y), test_x);
  };
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

}  // namespace

MetaState init_state(const RunConfig& cfg) {
  Rng theta_rng(cfg.seed, 1);
  Rng extra_rng(cfg.seed, 2);
  ParamSet theta =
      is_nav(cfg.experiment) ? init_policy(cfg.model, theta_rng) : init_mlp(cfg.model, theta_rng);

  MetaState state;
  for (const auto& [name, t] : theta.items) state.params.add("theta." + name, t);
  switch (cfg.meta_learner) {
    case MetaLearnerKind::MetaSgd: {
      const double a0 = cfg.alpha_init == "uniform" ? extra_rng.uniform(0.005, 0.1)
                                                    : cfg.alpha_constant;
      ParamSet alpha = like_filled(theta, a0);
      for (const auto& [name, t] : alpha.items)
        (cfg.alpha_learn ? state.params : state.frozen).add("alpha." + name, t);
      break;
    }
    case MetaLearnerKind::Maml:
      break;
    case MetaLearnerKind::LrLstm: {
      const std::size_t n2 = theta2_numel(cfg.model, cfg.lstm_split_layer);
      ParamSet phi = init_lstm_phi(2 * n2 + 1, cfg.lstm_hidden, extra_rng);
      for (const auto& [name, t] : phi.items) state.params.add("phi." + name, t);
      break;
    }
  }
  state.opt = init_adam(state.params);
  return state;
}

ParamSet state_to_checkpoint(const MetaState& state, const RunConfig& cfg) {
  ParamSet out;
  for (const auto& [name, t] : state.params.items) out.add("param." + name, t);
  for (const auto& [name, t] : state.frozen.items) out.add("frozen." + name, t);
  for (std::size_t i = 0; i < state.params.size(); ++i)
    out.add("adam.m." + state.params.items[i].first, state.opt.m[i]);
  for (std::size_t i = 0; i < state.params.size(); ++i)
    out.add("adam.v." + state.params.items[i].first, state.opt.v[i]);
  out.add("adam.step", Tensor::scalar(static_cast<double>(state.opt.step)));
  out.add("meta.iteration", Tensor::scalar(static_cast<double>(state.iteration)));
  const std::uint64_t h = config_hash(cfg);
  out.add("meta.config_hash",
          Tensor::vector({static_cast<double>(h & 0xffffffffull), static_cast<double>(h >> 32)}));
  const std::string text = serialize_config(cfg);
  std::vector<double> bytes(text.size());
  for (std::size_t i = 0; i < text.size(); ++i)
    bytes[i] = static_cast<double>(static_cast<unsigned char>(text[i]));
  out.add("meta.config", Tensor::vector(std::move(bytes)));
  return out;
}

namespace {

void restore(Tensor& dst, const ParamSet& arrays, const std::string& name) {
  const Tensor& src = arrays.at(name);
  if (!dst.same_dims(src))
    throw ShapeError("checkpoint array '" + name + "' does not match the configured shapes");
  dst = src;
}

}  // namespace

MetaState state_from_checkpoint(const ParamSet& arrays, const RunConfig& cfg) {
  MetaState state = init_state(cfg);
  for (auto& [name, t] : state.params.items) restore(t, arrays, "param." + name);
  for (auto& [name, t] : state.frozen.items) restore(t, arrays, "frozen." + name);
  for (std::size_t i = 0; i < state.params.size(); ++i) {
    restore(state.opt.m[i], arrays, "adam.m." + state.params.items[i].first);
    restore(state.opt.v[i], arrays, "adam.v." + state.params.items[i].first);
  }
  state.opt.step = static_cast<long>(arrays.at("adam.step")[0]);
  state.iteration = static_cast<std::size_t>(arrays.at("meta.iteration")[0]);
  return state;
}

RunConfig config_from_checkpoint(const ParamSet& arrays) {
  const Tensor& bytes = arrays.at("meta.config");
  std::string text(bytes.numel(), '\0');
  for (std::size_t i = 0; i < bytes.numel(); ++i)
    text[i] = static_cast<char>(static_cast<unsigned char>(bytes[i]));
  return parse_config_text(text);
}

RlEvalResult evaluate_nav(const RunConfig& cfg, const MetaState& state) {
  const LearnerView view = view_of(state);
  const RlAdaptFn adapt = [cfg, view](const NavMdp& task, std::span<const Trajectory> pre) {
    (void)task;
    return adapt_policy(cfg, view, pre);
  };
  Rng task_rng(cfg.seed, 5);
  Rng rollout_rng(cfg.seed, 6);
  return evaluate_rl(cfg.model, view.theta, adapt, make_nav_sampler(cfg), cfg.eval_tasks,
                     cfg.nav_n1, cfg.nav_n2, task_rng, rollout_rng);
}

std::vector<EvalRow> evaluate_state(const RunConfig& cfg, const MetaState& state) {
  const LearnerView view = view_of(state);
  std::vector<EvalRow> rows;
  switch (cfg.experiment) {
    case ExperimentKind::Sine: {
      const RegressionAdapter adapt = make_regression_adapter(cfg, view);
      Rng rng(cfg.seed, 5);
      for (std::size_t shots : {std::size_t{5}, std::size_t{10}, std::size_t{20}}) {
        SineTaskConfig tc = cfg.sine;
        tc.shots = shots;
        const EvalStats s =
            evaluate_regression(tc, adapt, rng, cfg.eval_curves, cfg.eval_grid, cfg.eval_repeats);
        rows.push_back({std::to_string(shots) + "-shot", s.mean, s.ci95_half});
      }
      break;
    }
    case ExperimentKind::Cluster: {
      Rng rng(cfg.seed, 5);
      const EvalStats s = evaluate_classification(cfg.cluster, make_classification_adapter(cfg, view),
                                                  rng, cfg.eval_tasks);
      rows.push_back({"accuracy", s.mean, s.ci95_half});
      break;
    }
    case ExperimentKind::NavFixed:
    case ExperimentKind::NavRandom: {
      const RlEvalResult r = evaluate_nav(cfg, state);
      const EvalStats pre = mean_ci95(r.pre_returns);
      const EvalStats post = mean_ci95(r.post_returns);
      rows.push_back({"pre-adaptation", pre.mean, pre.ci95_half});
      rows.push_back({"post-adaptation", post.mean, post.ci95_half});
      break;
    }
  }
  return rows;
}

RunArtifacts run_train(const RunConfig& cfg) {
  ensure_dir(cfg.output_dir);
  MetaState state = init_state(cfg);
  Rng task_rng(cfg.seed, 3);

  TrainLog log;
  if (is_nav(cfg.experiment)) {
    Rng rollout_rng(cfg.seed, 4);
    log = meta_train_rl(state.params, state.opt, make_nav_episode(cfg, state.frozen),
                        make_nav_sampler(cfg), cfg.train, task_rng, rollout_rng);
  } else {
    const TaskSamplerFn sampler =
        cfg.experiment == ExperimentKind::Sine
            ? TaskSamplerFn([cfg](Rng& rng) { return sample_sine_task(cfg.sine, rng); })
            : TaskSamplerFn([cfg](Rng& rng) { return sample_cluster_task(cfg.cluster, rng); });
    log = meta_train_supervised(state.params, state.opt, make_supervised_episode(cfg, state.frozen),
                                sampler, cfg.train, task_rng);
  }
  state.iteration = cfg.train.iterations;

  RunArtifacts paths;
  paths.train_log = join_path(cfg.output_dir, "train_log.csv");
  paths.checkpoint = join_path(cfg.output_dir, "checkpoint.bin");
  paths.eval_summary = join_path(cfg.output_dir, "eval_summary.csv");
  write_train_log(paths.train_log, log);
  save_checkpoint(paths.checkpoint, state_to_checkpoint(state, cfg));
  write_eval_summary(paths.eval_summary, evaluate_state(cfg, state));
  return paths;
}

std::string run_eval(const RunConfig& cfg, const std::string& checkpoint_path) {
  const MetaState state = state_from_checkpoint(load_checkpoint(checkpoint_path), cfg);
  ensure_dir(cfg.output_dir);
  const std::string path = join_path(cfg.output_dir, "eval_summary.csv");
  write_eval_summary(path, evaluate_state(cfg, state));
  return path;
}

void run_export_curve(const std::string& checkpoint_path, std::uint64_t task_seed,
                      std::ostream& out) {
  const ParamSet arrays = load_checkpoint(checkpoint_path);
  const RunConfig cfg = config_from_checkpoint(arrays);
  if (cfg.experiment != ExperimentKind::Sine)
    throw ShapeError("export-curve: checkpoint does not come from a sine run");
  const MetaState state = state_from_checkpoint(arrays, cfg);
  const LearnerView view = view_of(state);

  Rng rng(task_seed, 5);
  const FewShotTask task = sample_sine_task(cfg.sine, rng);
  const Tensor grid = linspace_column(cfg.sine.x_lo, cfg.sine.x_hi, cfg.eval_grid);
  const Tensor y_pre = forward_mlp_value(cfg.model, view.theta, grid);
  const Tensor y_post = make_regression_adapter(cfg, view)(task.train_x, task.train_y, grid);

  out << "x,y_true,y_pre,y_post\n";
  for (std::size_t i = 0; i < grid.numel(); ++i) {
    const double y_true = eval_sine(task.amplitude, task.frequency, task.phase, grid[i]);
    out << format_double(grid[i]) << ',' << format_double(y_true) << ',' << format_double(y_pre[i])
        << ',' << format_double(y_post[i]) << '\n';
  }
}

}  // namespace metasgd
