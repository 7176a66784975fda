#include "metasgd/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "metasgd/metalearners.hpp"
#include "metasgd/rl.hpp"

namespace metasgd {

namespace {

struct Suite {
  std::string name;
  double tol;
  double max_rel = 0.0;
  std::string worst = "-";

  void update(const std::string& check, double reference, double actual) {
    const double rel = std::abs(reference - actual) /
                       std::max({1.0, std::abs(reference), std::abs(actual)});
    if (rel > max_rel) {
      max_rel = rel;
      worst = check;
    }
  }

  CheckResult result() const { return {name, worst, max_rel, tol, max_rel <= tol}; }
};

using PipelineFn = std::function<double(const ParamSet&)>;

/// Central finite differences of `f` around `params`, entry by entry,
/// against the aligned analytic gradients.
void fd_against(Suite& suite, const std::string& label, ParamSet params, const ParamSet& analytic,
                const PipelineFn& f, double h = 1e-5) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& t = params.items[i].second;
    const Tensor& g = analytic.items[i].second;
    for (std::size_t j = 0; j < t.numel(); ++j) {
      const double saved = t[j];
      t[j] = saved + h;
      const double fp = f(params);
      t[j] = saved - h;
      const double fm = f(params);
      t[j] = saved;
      suite.update(label, g[j], (fp - fm) / (2.0 * h));
    }
  }
}

Tensor uniform_tensor(Rng& rng, std::vector<std::size_t> dims, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// Magnitudes in [lo, hi] with random signs; keeps relu/step inputs away
/// from the kink at zero.
Tensor signed_tensor(Rng& rng, std::vector<std::size_t> dims, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(dims));
  for (std::size_t i = 0; i < t.numel(); ++i)
    t[i] = rng.uniform(lo, hi) * (rng.next_double() < 0.5 ? -1.0 : 1.0);
  return t;
}

void randomize(ParamSet& params, Rng& rng, double lo, double hi) {
  for (auto& [name, t] : params.items)
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
}

using ExprFn = std::function<ad::Var(const VarSet&)>;

void check_expr(Suite& suite, const std::string& name, ParamSet inputs, const ExprFn& expr) {
  ad::Tape tape;
  VarSet vars = lift(tape, inputs, true);
  ad::Var out = expr(vars);
  std::vector<ad::Var> leaves;
  for (const auto& [n, v] : vars.items) leaves.push_back(v);
  const std::vector<ad::Var> grads = ad::grad(out, leaves, false);
  ParamSet analytic;
  for (std::size_t i = 0; i < vars.size(); ++i)
    analytic.add(vars.items[i].first, grads[i].value());

  const PipelineFn f = [&expr](const ParamSet& p) {
    ad::Tape t;
    VarSet v = lift(t, p, true);
    return expr(v).value()[0];
  };
  fd_against(suite, name, std::move(inputs), analytic, f);
}

ad::Var sq_sum(const ad::Var& v) { return ad::sum(ad::square(v)); }

ParamSet one(const std::string& name, Tensor t) {
  ParamSet p;
  p.add(name, std::move(t));
  return p;
}

ParamSet two(Tensor a, Tensor b) {
  ParamSet p;
  p.add("a", std::move(a));
  p.add("b", std::move(b));
  return p;
}

CheckResult check_ops() {
  Suite suite{"ops", 1e-6};
  Rng rng(11, 0);

  const Tensor a23 = signed_tensor(rng, {2, 3}, 0.2, 1.2);
  const Tensor b23 = signed_tensor(rng, {2, 3}, 0.2, 1.2);
  const Tensor pos = uniform_tensor(rng, {2, 3}, 0.5, 2.2);

  check_expr(suite, "add", two(a23, b23),
             [](const VarSet& v) { return sq_sum(ad::add(v.at("a"), v.at("b"))); });
  check_expr(suite, "sub", two(a23, b23),
             [](const VarSet& v) { return sq_sum(ad::sub(v.at("a"), v.at("b"))); });
  check_expr(suite, "mul", two(a23, b23),
             [](const VarSet& v) { return sq_sum(ad::mul(v.at("a"), v.at("b"))); });
  check_expr(suite, "neg", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::neg(v.at("a"))); });
  check_expr(suite, "square", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::square(v.at("a"))); });
  check_expr(suite, "exp", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::exp(v.at("a"))); });
  check_expr(suite, "log", one("a", pos),
             [](const VarSet& v) { return sq_sum(ad::log(v.at("a"))); });
  check_expr(suite, "relu", one("a", signed_tensor(rng, {2, 3}, 0.3, 1.2)),
             [](const VarSet& v) { return sq_sum(ad::relu(v.at("a"))); });
  check_expr(suite, "tanh", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::tanh(v.at("a"))); });
  check_expr(suite, "sigmoid", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::sigmoid(v.at("a"))); });
  check_expr(suite, "sin", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::sin(v.at("a"))); });
  check_expr(suite, "cos", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::cos(v.at("a"))); });
  check_expr(suite, "recip", one("a", pos),
             [](const VarSet& v) { return sq_sum(ad::recip(v.at("a"))); });
  check_expr(suite, "step_pos", one("a", signed_tensor(rng, {2, 3}, 0.3, 1.2)),
             [](const VarSet& v) { return ad::sum(ad::mul(v.at("a"), ad::step_pos(v.at("a")))); });
  check_expr(suite, "scale", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::scale(v.at("a"), 1.7)); });

  check_expr(suite, "matmul",
             two(signed_tensor(rng, {2, 3}, 0.2, 1.0), signed_tensor(rng, {3, 2}, 0.2, 1.0)),
             [](const VarSet& v) { return sq_sum(ad::matmul(v.at("a"), v.at("b"))); });
  check_expr(suite, "transpose", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::transpose(v.at("a"))); });
  check_expr(suite, "add_bias_row",
             two(signed_tensor(rng, {3, 2}, 0.2, 1.0), signed_tensor(rng, {2}, 0.2, 1.0)),
             [](const VarSet& v) { return sq_sum(ad::add_bias_row(v.at("a"), v.at("b"))); });
  check_expr(suite, "row_sum", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::row_sum(v.at("a"))); });
  check_expr(suite, "col_sum", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::col_sum(v.at("a"))); });
  check_expr(suite, "repeat_row", one("a", signed_tensor(rng, {3}, 0.2, 1.0)),
             [](const VarSet& v) { return sq_sum(ad::repeat_row(v.at("a"), 2)); });
  check_expr(suite, "repeat_col", one("a", signed_tensor(rng, {2}, 0.2, 1.0)),
             [](const VarSet& v) { return sq_sum(ad::repeat_col(v.at("a"), 3)); });
  check_expr(suite, "broadcast_scalar", one("a", Tensor::scalar(0.7)), [](const VarSet& v) {
    return sq_sum(ad::broadcast_scalar(v.at("a"), {2, 3}));
  });
  check_expr(suite, "sum", one("a", a23),
             [](const VarSet& v) { return ad::square(ad::sum(v.at("a"))); });
  check_expr(suite, "mean", one("a", a23),
             [](const VarSet& v) { return ad::square(ad::mean(v.at("a"))); });
  check_expr(suite, "concat",
             two(signed_tensor(rng, {3}, 0.2, 1.0), signed_tensor(rng, {2}, 0.2, 1.0)),
             [](const VarSet& v) { return sq_sum(ad::concat(v.at("a"), v.at("b"))); });
  check_expr(suite, "slice", one("a", signed_tensor(rng, {5}, 0.2, 1.0)),
             [](const VarSet& v) { return sq_sum(ad::slice(v.at("a"), 1, 3)); });
  check_expr(suite, "embed_slice", one("a", signed_tensor(rng, {3}, 0.2, 1.0)),
             [](const VarSet& v) { return sq_sum(ad::embed_slice(v.at("a"), 1, 5)); });
  check_expr(suite, "reshape", one("a", a23),
             [](const VarSet& v) { return sq_sum(ad::reshape(v.at("a"), {6})); });

  const Tensor target = signed_tensor(rng, {3, 2}, 0.2, 1.0);
  check_expr(suite, "mse_loss", one("a", signed_tensor(rng, {3, 2}, 0.2, 1.0)),
             [target](const VarSet& v) { return ad::mse_loss(v.at("a"), target); });
  const Tensor onehot = Tensor::matrix(3, 4, {0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 1});
  check_expr(suite, "softmax_cross_entropy", one("a", signed_tensor(rng, {3, 4}, 0.2, 1.5)),
             [onehot](const VarSet& v) { return ad::softmax_cross_entropy(v.at("a"), onehot); });

  return suite.result();
}

/// Analytic gradients of `loss` with respect to every entry of `params`.
ParamSet net_gradients(const ParamSet& params, const LossBuilder& loss) {
  ad::Tape tape;
  VarSet vars = lift(tape, params, true);
  ad::Var out = loss(vars);
  std::vector<ad::Var> leaves;
  for (const auto& [n, v] : vars.items) leaves.push_back(v);
  const std::vector<ad::Var> grads = ad::grad(out, leaves, false);
  ParamSet analytic;
  for (std::size_t i = 0; i < vars.size(); ++i)
    analytic.add(vars.items[i].first, grads[i].value());
  return analytic;
}

PipelineFn net_value(const LossBuilder& loss) {
  return [loss](const ParamSet& p) {
    ad::Tape tape;
    VarSet vars = lift(tape, p, true);
    return loss(vars).value()[0];
  };
}

Trajectory make_traj(std::vector<std::array<double, 2>> states,
                     std::vector<std::array<double, 2>> actions, std::vector<double> rewards) {
  Trajectory t;
  t.states = std::move(states);
  t.actions = std::move(actions);
  t.rewards = std::move(rewards);
  return t;
}

std::vector<Trajectory> fixture_pre() {
  return {make_traj({{0, 0}, {0.1, 0.2}, {0.3, 0.1}, {0.2, -0.2}},
                    {{0.1, 0.2}, {0.2, -0.1}, {-0.1, -0.3}}, {-0.5, -0.4, -0.3}),
          make_traj({{0, 0}, {-0.2, 0.1}, {-0.1, 0.3}}, {{-0.2, 0.1}, {0.1, 0.2}}, {-0.6, -0.2})};
}

std::vector<Trajectory> fixture_post() {
  return {make_traj({{0, 0}, {0.2, 0.2}, {0.1, 0.4}}, {{0.2, 0.2}, {-0.1, 0.2}}, {-0.4, -0.2}),
          make_traj({{0, 0}, {0.0, -0.3}}, {{0.0, -0.3}}, {-0.5})};
}

CheckResult check_losses() {
  Suite suite{"losses", 1e-6};
  Rng rng(12, 0);

  {
    MlpSpec spec{{1, 4, 1}, Activation::Tanh};
    ParamSet params = init_mlp(spec, rng);
    randomize(params, rng, -0.8, 0.8);
    const Tensor x = uniform_tensor(rng, {4, 1}, -2.0, 2.0);
    const Tensor y = uniform_tensor(rng, {4, 1}, -1.0, 1.0);
    const LossBuilder loss = make_mse_loss(spec, x, y);
    fd_against(suite, "mse-net", params, net_gradients(params, loss), net_value(loss));
  }
  {
    MlpSpec spec{{2, 4, 3}, Activation::Tanh};
    ParamSet params = init_mlp(spec, rng);
    randomize(params, rng, -0.8, 0.8);
    const Tensor x = uniform_tensor(rng, {3, 2}, -1.5, 1.5);
    const Tensor onehot = Tensor::matrix(3, 3, {1, 0, 0, 0, 0, 1, 0, 1, 0});
    const LossBuilder loss = make_ce_loss(spec, x, onehot);
    fd_against(suite, "ce-net", params, net_gradients(params, loss), net_value(loss));
  }
  {
    MlpSpec spec{{2, 3, 2}, Activation::Tanh};
    ParamSet params = init_policy(spec, rng);
    randomize(params, rng, -0.6, 0.6);
    params.at("log_var")[0] = -0.2;
    params.at("log_var")[1] = 0.3;
    const std::vector<Trajectory> trajs = fixture_pre();
    const LossBuilder loss = [trajs, spec](const VarSet& p) {
      return pg_surrogate_loss(std::span<const Trajectory>(trajs), spec, p, 0.9);
    };
    fd_against(suite, "pg-surrogate", params, net_gradients(params, loss), net_value(loss));
  }
  return suite.result();
}

CheckResult check_meta() {
  Suite suite{"meta", 1e-5};
  Rng rng(13, 0);

  const MlpSpec spec{{1, 3, 1}, Activation::Tanh};
  const Tensor train_x = uniform_tensor(rng, {3, 1}, -2.0, 2.0);
  const Tensor train_y = uniform_tensor(rng, {3, 1}, -1.0, 1.0);
  const Tensor test_x = uniform_tensor(rng, {4, 1}, -2.0, 2.0);
  const Tensor test_y = uniform_tensor(rng, {4, 1}, -1.0, 1.0);
  const LossBuilder train_loss = make_mse_loss(spec, train_x, train_y);
  const LossBuilder test_loss = make_mse_loss(spec, test_x, test_y);

  {
    ParamSet theta = init_mlp(spec, rng);
    randomize(theta, rng, -0.8, 0.8);
    ParamSet alpha = like_filled(theta, 0.0);
    randomize(alpha, rng, 0.02, 0.09);
    ParamSet packed;
    for (const auto& [n, t] : theta.items) packed.add("theta." + n, t);
    for (const auto& [n, t] : alpha.items) packed.add("alpha." + n, t);

    ad::Tape tape;
    VarSet th = lift(tape, theta, true);
    VarSet al = lift(tape, alpha, true);
    ad::Var outer = meta_loss(meta_sgd_adapt(th, al, train_loss, 2, true), test_loss);
    std::vector<ad::Var> leaves;
    for (const auto& [n, v] : th.items) leaves.push_back(v);
    for (const auto& [n, v] : al.items) leaves.push_back(v);
    const std::vector<ad::Var> grads = ad::grad(outer, leaves, false);
    ParamSet analytic;
    for (std::size_t i = 0; i < packed.size(); ++i)
      analytic.add(packed.items[i].first, grads[i].value());

    const PipelineFn f = [&](const ParamSet& p) {
      ad::Tape t;
      VarSet th2 = lift(t, subset_with_prefix(p, "theta."), true);
      VarSet al2 = lift(t, subset_with_prefix(p, "alpha."), true);
      return meta_loss(meta_sgd_adapt(th2, al2, train_loss, 2, true), test_loss).value()[0];
    };
    fd_against(suite, "metasgd", packed, analytic, f);
  }
  {
    ParamSet theta = init_mlp(spec, rng);
    randomize(theta, rng, -0.8, 0.8);

    ad::Tape tape;
    VarSet th = lift(tape, theta, true);
    ad::Var outer = meta_loss(maml_adapt(th, 0.05, 2, train_loss, true), test_loss);
    std::vector<ad::Var> leaves;
    for (const auto& [n, v] : th.items) leaves.push_back(v);
    const std::vector<ad::Var> grads = ad::grad(outer, leaves, false);
    ParamSet analytic;
    for (std::size_t i = 0; i < theta.size(); ++i)
      analytic.add(theta.items[i].first, grads[i].value());

    const PipelineFn f = [&](const ParamSet& p) {
      ad::Tape t;
      VarSet th2 = lift(t, p, true);
      return meta_loss(maml_adapt(th2, 0.05, 2, train_loss, true), test_loss).value()[0];
    };
    fd_against(suite, "maml", theta, analytic, f);
  }
  {
    const std::size_t hidden = 3;
    ParamSet theta = init_mlp(spec, rng);
    randomize(theta, rng, -0.8, 0.8);
    const ParamSet t1 = subset_range(theta, 0, 2);
    const ParamSet t2 = subset_range(theta, 2, theta.size());
    ParamSet phi = init_lstm_phi(2 * t2.total_numel() + 1, hidden, rng);

    ParamSet packed;
    for (const auto& [n, t] : phi.items) packed.add("phi." + n, t);
    for (const auto& [n, t] : t1.items) packed.add("t1." + n, t);
    for (const auto& [n, t] : t2.items) packed.add("t2." + n, t);

    const auto build = [&](ad::Tape& tape, const ParamSet& p, std::vector<ad::Var>* leaves) {
      VarSet phi_v = lift(tape, subset_with_prefix(p, "phi."), true);
      VarSet t1_v = lift(tape, subset_with_prefix(p, "t1."), true);
      VarSet t2_v = lift(tape, subset_with_prefix(p, "t2."), true);
      if (leaves) {
        for (const auto& [n, v] : phi_v.items) leaves->push_back(v);
        for (const auto& [n, v] : t1_v.items) leaves->push_back(v);
        for (const auto& [n, v] : t2_v.items) leaves->push_back(v);
      }
      return meta_loss(lstm_adapt(phi_v, t1_v, t2_v, train_loss, 2, 0.1, hidden, true), test_loss);
    };

    ad::Tape tape;
    std::vector<ad::Var> leaves;
    ad::Var outer = build(tape, packed, &leaves);
    const std::vector<ad::Var> grads = ad::grad(outer, leaves, false);
    ParamSet analytic;
    for (std::size_t i = 0; i < packed.size(); ++i)
      analytic.add(packed.items[i].first, grads[i].value());

    const PipelineFn f = [&](const ParamSet& p) {
      ad::Tape t;
      return build(t, p, nullptr).value()[0];
    };
    fd_against(suite, "lstm-bptt", packed, analytic, f);
  }
  return suite.result();
}

CheckResult check_rl_meta() {
  Suite suite{"rl-meta", 1e-5};
  Rng rng(14, 0);

  const MlpSpec spec{{2, 3, 2}, Activation::Tanh};
  ParamSet theta = init_policy(spec, rng);
  randomize(theta, rng, -0.5, 0.5);
  theta.at("log_var")[0] = -0.1;
  theta.at("log_var")[1] = 0.2;
  ParamSet alpha = like_filled(theta, 0.0);
  randomize(alpha, rng, 0.02, 0.06);

  const std::vector<Trajectory> pre = fixture_pre();
  const std::vector<Trajectory> post = fixture_post();
  const LossBuilder inner = [&pre, spec](const VarSet& p) {
    return pg_surrogate_loss(std::span<const Trajectory>(pre), spec, p, 0.9);
  };

  ParamSet packed;
  for (const auto& [n, t] : theta.items) packed.add("theta." + n, t);
  for (const auto& [n, t] : alpha.items) packed.add("alpha." + n, t);

  const auto build = [&](ad::Tape& tape, const ParamSet& p, std::vector<ad::Var>* leaves) {
    VarSet th = lift(tape, subset_with_prefix(p, "theta."), true);
    VarSet al = lift(tape, subset_with_prefix(p, "alpha."), true);
    if (leaves) {
      for (const auto& [n, v] : th.items) leaves->push_back(v);
      for (const auto& [n, v] : al.items) leaves->push_back(v);
    }
    AdaptResult r = meta_sgd_adapt(th, al, inner, 1, true);
    return pg_surrogate_loss(std::span<const Trajectory>(post), spec, r.adapted, 0.9);
  };

  ad::Tape tape;
  std::vector<ad::Var> leaves;
  ad::Var outer = build(tape, packed, &leaves);
  const std::vector<ad::Var> grads = ad::grad(outer, leaves, false);
  ParamSet analytic;
  for (std::size_t i = 0; i < packed.size(); ++i)
    analytic.add(packed.items[i].first, grads[i].value());

  const PipelineFn f = [&](const ParamSet& p) {
    ad::Tape t;
    return build(t, p, nullptr).value()[0];
  };
  fd_against(suite, "metasgd-rl", packed, analytic, f);
  return suite.result();
}

/// L1(theta) = 0.5 theta' A theta adapted one step with elementwise rates,
/// then L2 = 0.5 theta2' B theta2. The full outer gradient, the first-order
/// ablation, and their difference (the Hessian term) all have closed forms.
CheckResult check_quadratic() {
  Suite suite{"quadratic", 1e-9};

  const std::vector<double> theta = {0.3, -0.7, 0.5};
  const std::vector<double> alpha = {0.05, 0.02, 0.08};
  const std::vector<double> A = {2.0, 0.3, -0.2, 0.3, 1.5, 0.4, -0.2, 0.4, 1.2};
  const std::vector<double> B = {1.0, 0.2, 0.1, 0.2, 0.8, -0.3, 0.1, -0.3, 1.5};

  const auto quad_loss = [](Tensor m) {
    return LossBuilder([m](const VarSet& p) {
      const ad::Var& th = p.at("th");
      return ad::scale(ad::sum(ad::mul(ad::matmul(th, ad::constant(*th.tape(), m)), th)), 0.5);
    });
  };
  const LossBuilder train_loss = quad_loss(Tensor::matrix(3, 3, A));
  const LossBuilder test_loss = quad_loss(Tensor::matrix(3, 3, B));

  const auto engine_grads = [&](bool create_graph) {
    ad::Tape tape;
    VarSet th;
    th.add("th", ad::var(tape, Tensor::matrix(1, 3, theta), true));
    VarSet al;
    al.add("th", ad::var(tape, Tensor::matrix(1, 3, alpha), true));
    ad::Var outer =
        meta_loss(meta_sgd_adapt(th, al, train_loss, 1, create_graph), test_loss);
    const std::vector<ad::Var> leaves = {th.at("th"), al.at("th")};
    const std::vector<ad::Var> grads = ad::grad(outer, leaves, false);
    return std::pair<Tensor, Tensor>(grads[0].value(), grads[1].value());
  };
  const auto [full_t, full_a] = engine_grads(true);
  const auto [fo_t, fo_a] = engine_grads(false);

  // Closed forms: theta2 = theta - D A theta with D = diag(alpha);
  // grad_theta = (I - A D) B theta2, grad_alpha = -(A theta) o (B theta2),
  // first-order grad_theta = B theta2.
  std::vector<double> a_theta(3, 0.0), theta2(3, 0.0), b_theta2(3, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) a_theta[i] += A[3 * i + j] * theta[j];
  for (int i = 0; i < 3; ++i) theta2[i] = theta[i] - alpha[i] * a_theta[i];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) b_theta2[i] += B[3 * i + j] * theta2[j];

  for (int i = 0; i < 3; ++i) {
    double hessian_term = 0.0;
    for (int j = 0; j < 3; ++j) hessian_term -= A[3 * i + j] * alpha[j] * b_theta2[j];
    const double full_theta = b_theta2[i] + hessian_term;
    const double full_alpha = -a_theta[i] * b_theta2[i];

    suite.update("theta", full_theta, full_t[i]);
    suite.update("alpha", full_alpha, full_a[i]);
    suite.update("first-order-theta", b_theta2[i], fo_t[i]);
    suite.update("first-order-alpha", full_alpha, fo_a[i]);
    suite.update("hessian-term", hessian_term, full_t[i] - fo_t[i]);
  }
  return suite.result();
}

}  // namespace

std::vector<CheckResult> run_gradcheck(const std::string& inject_fault_op) {
  ad::set_gradient_fault(inject_fault_op);
  std::vector<CheckResult> results;
  try {
    results.push_back(check_ops());
    results.push_back(check_losses());
    results.push_back(check_meta());
    results.push_back(check_rl_meta());
    results.push_back(check_quadratic());
  } catch (...) {
    ad::set_gradient_fault("");
    throw;
  }
  ad::set_gradient_fault("");
  return results;
}

}  // namespace metasgd
