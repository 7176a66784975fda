#include <cmath>
#include <vector>

#include "doctest.h"
#include "metasgd/metalearners.hpp"

using namespace metasgd;

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Quadratic loss 0.5 * sum_i c_i * (p_i - t_i)^2 over every element of every
// entry, so d loss / d p_i = c_i * (p_i - t_i) exactly.
LossBuilder quad_loss(std::vector<double> coeffs, std::vector<double> targets) {
  return [coeffs = std::move(coeffs), targets = std::move(targets)](const VarSet& params) {
    ad::Tape& tape = *params.items.front().second.tape();
    ad::Var acc = ad::constant(tape, Tensor::scalar(0.0));
    std::size_t k = 0;
    for (const auto& [name, v] : params.items) {
      for (std::size_t i = 0; i < v.value().numel(); ++i) {
        ad::Var p = ad::reshape(ad::slice(ad::reshape(v, {v.value().numel()}), i, 1), {});
        ad::Var d = ad::sub(p, ad::constant(tape, Tensor::scalar(targets[k])));
        acc = ad::add(acc, ad::scale(ad::square(d), 0.5 * coeffs[k]));
        ++k;
      }
    }
    return acc;
  };
}

}  // namespace

TEST_CASE("meta_sgd_adapt matches theta - alpha * grad by hand") {
  ad::Tape tape;
  VarSet theta, alpha;
  theta.add("p", ad::var(tape, Tensor::vector({2.0, -1.0}), true));
  alpha.add("p", ad::var(tape, Tensor::vector({0.1, 0.3}), true));
  // loss = 0.5*3*(p0-1)^2 + 0.5*2*(p1+4)^2, grad = {3*(2-1), 2*(-1+4)} = {3, 6}
  AdaptResult r = meta_sgd_adapt(theta, alpha, quad_loss({3.0, 2.0}, {1.0, -4.0}), 1, true);
  REQUIRE(r.adapted.size() == 1);
  const Tensor got = r.adapted.at("p").value();
  CHECK(got[0] == doctest::Approx(2.0 - 0.1 * 3.0).epsilon(1e-12));
  CHECK(got[1] == doctest::Approx(-1.0 - 0.3 * 6.0).epsilon(1e-12));
  REQUIRE(r.train_losses.size() == 1);
  CHECK(r.train_losses[0] == doctest::Approx(0.5 * 3 + 0.5 * 2 * 9).epsilon(1e-12));
  CHECK(r.rates.empty());
}

TEST_CASE("meta_sgd_adapt with constant alpha equals maml_adapt bitwise") {
  const double a = 0.07;
  for (int steps : {1, 3}) {
    ad::Tape t1;
    VarSet theta1;
    theta1.add("w", ad::var(t1, Tensor::matrix(2, 1, {0.4, -0.2}), true));
    theta1.add("b", ad::var(t1, Tensor::vector({0.1}), true));
    VarSet alpha1;
    alpha1.add("w", ad::constant(t1, Tensor::full({2, 1}, a)));
    alpha1.add("b", ad::constant(t1, Tensor::full({1}, a)));
    AdaptResult r1 =
        meta_sgd_adapt(theta1, alpha1, quad_loss({1, 2, 3}, {1, 1, 1}), steps, true);

    ad::Tape t2;
    VarSet theta2;
    theta2.add("w", ad::var(t2, Tensor::matrix(2, 1, {0.4, -0.2}), true));
    theta2.add("b", ad::var(t2, Tensor::vector({0.1}), true));
    AdaptResult r2 = maml_adapt(theta2, a, steps, quad_loss({1, 2, 3}, {1, 1, 1}), true);

    for (std::size_t i = 0; i < r1.adapted.size(); ++i) {
      CHECK(r1.adapted.items[i].second.value() == r2.adapted.items[i].second.value());
    }
    CHECK(r1.train_losses == r2.train_losses);
  }
}

TEST_CASE("zero alpha and zero inner steps leave theta unchanged") {
  ad::Tape tape;
  VarSet theta;
  theta.add("p", ad::var(tape, Tensor::vector({5.0, 6.0}), true));
  VarSet alpha;
  alpha.add("p", ad::constant(tape, Tensor::zeros({2})));

  AdaptResult r = meta_sgd_adapt(theta, alpha, quad_loss({1, 1}, {0, 0}), 2, true);
  CHECK(r.adapted.at("p").value() == theta.at("p").value());

  AdaptResult r0 = maml_adapt(theta, 0.5, 0, quad_loss({1, 1}, {0, 0}), true);
  CHECK(r0.adapted.at("p").value() == theta.at("p").value());
  CHECK(r0.train_losses.empty());
}

TEST_CASE("multi-step adaptation composes single steps") {
  // One param, loss 0.5*(p-t)^2: step is p <- p - a*(p-t), contraction toward t.
  const double a = 0.2, t = 3.0;
  double p = 10.0;
  for (int i = 0; i < 3; ++i) p = p - a * (p - t);

  ad::Tape tape;
  VarSet theta, alpha;
  theta.add("p", ad::var(tape, Tensor::scalar(10.0), true));
  alpha.add("p", ad::constant(tape, Tensor::full({}, a)));
  AdaptResult r = meta_sgd_adapt(theta, alpha, quad_loss({1.0}, {t}), 3, true);
  CHECK(r.adapted.at("p").value().item() == doctest::Approx(p).epsilon(1e-12));
  CHECK(r.train_losses.size() == 3);
  CHECK(r.train_losses[0] > r.train_losses[1]);
  CHECK(r.train_losses[1] > r.train_losses[2]);
}

TEST_CASE("outer gradient through adaptation carries the second-order term") {
  // theta' = theta - alpha*c*(theta - t); outer loss 0.5*(theta' - u)^2.
  // d outer / d theta = (theta' - u) * (1 - alpha*c), and the ablation drops
  // nothing here except... it treats inner grad as constant: d theta'/d theta = 1.
  const double c = 2.0, t = 1.0, u = 0.0, a = 0.25, th = 3.0;
  const double adapted = th - a * c * (th - t);

  auto run = [&](bool create_graph) {
    ad::Tape tape;
    VarSet theta, alpha;
    theta.add("p", ad::var(tape, Tensor::scalar(th), true));
    alpha.add("p", ad::var(tape, Tensor::scalar(a), true));
    AdaptResult r = meta_sgd_adapt(theta, alpha, quad_loss({c}, {t}), 1, create_graph);
    ad::Var outer = meta_loss(r, quad_loss({1.0}, {u}));
    std::vector<ad::Var> g =
        ad::grad(outer, std::vector<ad::Var>{theta.at("p"), alpha.at("p")}, false);
    return std::pair<double, double>(g[0].value().item(), g[1].value().item());
  };

  auto [g_theta_full, g_alpha_full] = run(true);
  auto [g_theta_fo, g_alpha_fo] = run(false);

  CHECK(g_theta_full == doctest::Approx((adapted - u) * (1 - a * c)).epsilon(1e-12));
  CHECK(g_theta_fo == doctest::Approx(adapted - u).epsilon(1e-12));
  const double g_alpha_hand = (adapted - u) * (-c * (th - t));
  CHECK(g_alpha_full == doctest::Approx(g_alpha_hand).epsilon(1e-12));
  CHECK(g_alpha_fo == doctest::Approx(g_alpha_hand).epsilon(1e-12));
}

TEST_CASE("lstm_lr_step matches a scalar hand-rolled cell") {
  // One-dimensional everything: D = 3 (theta2, loss, grad), H = 1.
  ad::Tape tape;
  VarSet phi;
  const std::vector<double> wx = {0.1, 0.2, -0.3, 0.05,   // theta2 row: gates i,f,o,g
                                  -0.2, 0.4, 0.1, 0.3,    // loss row
                                  0.25, -0.15, 0.2, -0.1}; // grad row
  const std::vector<double> wh = {0.5, -0.4, 0.3, 0.2};
  const std::vector<double> b = {0.01, 1.0, -0.02, 0.03};
  phi.add("wx", ad::var(tape, Tensor::matrix(3, 4, wx), true));
  phi.add("wh", ad::var(tape, Tensor::matrix(1, 4, wh), true));
  phi.add("b", ad::var(tape, Tensor::vector(b), true));
  phi.add("w_out", ad::var(tape, Tensor::vector({0.7}), true));
  phi.add("b_out", ad::var(tape, Tensor::scalar(-0.1), true));

  const double th2 = 0.6, loss = 1.7, gr = -0.9, h0 = 0.2, c0 = -0.3, beta = 0.8;
  LstmStepResult out = lstm_lr_step(
      phi, ad::constant(tape, Tensor::vector({th2})), ad::constant(tape, Tensor::scalar(loss)),
      ad::constant(tape, Tensor::vector({gr})), ad::constant(tape, Tensor::matrix(1, 1, {h0})),
      ad::constant(tape, Tensor::matrix(1, 1, {c0})), beta, 1);

  const double x[3] = {th2, loss, gr};
  double pre[4];
  for (int gidx = 0; gidx < 4; ++gidx) {
    pre[gidx] = b[gidx] + h0 * wh[gidx];
    for (int d = 0; d < 3; ++d) pre[gidx] += x[d] * wx[d * 4 + gidx];
  }
  const double gi = sigmoid(pre[0]), gf = sigmoid(pre[1]), go = sigmoid(pre[2]);
  const double gg = std::tanh(pre[3]);
  const double c1 = gf * c0 + gi * gg;
  const double h1 = go * std::tanh(c1);
  const double alpha = beta * sigmoid(0.7 * h1 - 0.1);

  CHECK(out.c.value().item() == doctest::Approx(c1).epsilon(1e-12));
  CHECK(out.h.value().item() == doctest::Approx(h1).epsilon(1e-12));
  CHECK(out.alpha.value().item() == doctest::Approx(alpha).epsilon(1e-12));
  CHECK(out.alpha.value().item() > 0.0);
  CHECK(out.alpha.value().item() < beta);
}

TEST_CASE("init_lstm_phi shapes, ranges, and forget bias") {
  Rng rng(7, 2);
  const std::size_t D = 5, H = 4;
  ParamSet phi = init_lstm_phi(D, H, rng);
  CHECK(phi.at("wx").dims() == std::vector<std::size_t>{D, 4 * H});
  CHECK(phi.at("wh").dims() == std::vector<std::size_t>{H, 4 * H});
  CHECK(phi.at("b").dims() == std::vector<std::size_t>{4 * H});
  CHECK(phi.at("w_out").dims() == std::vector<std::size_t>{H});
  CHECK(phi.at("b_out").dims() == std::vector<std::size_t>{});

  for (double v : phi.at("wx").data()) CHECK(std::fabs(v) <= 0.1);
  for (double v : phi.at("wh").data()) CHECK(std::fabs(v) <= 0.1);
  const Tensor& bias = phi.at("b");
  for (std::size_t j = 0; j < 4 * H; ++j) {
    if (j >= H && j < 2 * H) {
      CHECK(bias[j] >= 0.9);
      CHECK(bias[j] <= 1.1);
    } else {
      CHECK(std::fabs(bias[j]) <= 0.1);
    }
  }
}

TEST_CASE("lstm_adapt updates only theta2 and records T rates in (0, beta)") {
  ad::Tape tape;
  Rng rng(11, 2);
  VarSet theta1, theta2;
  theta1.add("w0", ad::var(tape, Tensor::matrix(1, 2, {0.3, -0.4}), true));
  theta2.add("w1", ad::var(tape, Tensor::matrix(2, 1, {0.2, 0.5}), true));

  ParamSet phi0 = init_lstm_phi(2 * 2 + 1, 6, rng);
  VarSet phi = lift(tape, phi0, true);

  const double beta = 0.4;
  // Loss over the concatenated full set (theta1 then theta2).
  LossBuilder loss = quad_loss({1, 1, 2, 2}, {0, 0, 1, -1});
  AdaptResult r = lstm_adapt(phi, theta1, theta2, loss, 3, beta, 6, true);

  REQUIRE(r.rates.size() == 3);
  for (double a : r.rates) {
    CHECK(a > 0.0);
    CHECK(a < beta);
  }
  REQUIRE(r.train_losses.size() == 3);
  CHECK(r.adapted.at("w0").value() == theta1.at("w0").value());
  CHECK(!(r.adapted.at("w1").value() == theta2.at("w1").value()));

  // First step by hand on theta2: grad of quad loss, shared scalar rate.
  const double g0 = 2.0 * (0.2 - 1.0), g1 = 2.0 * (0.5 + 1.0);
  const Tensor w1 = r.adapted.at("w1").value();
  // After one of three steps values differ, but step-1 rate reconstructs from
  // the recorded rate sequence only if we replay; instead check the direction
  // of the first update using a single-step run.
  AdaptResult one = lstm_adapt(phi, theta1, theta2, loss, 1, beta, 6, true);
  const Tensor w1_one = one.adapted.at("w1").value();
  CHECK(w1_one[0] == doctest::Approx(0.2 - one.rates[0] * g0).epsilon(1e-12));
  CHECK(w1_one[1] == doctest::Approx(0.5 - one.rates[0] * g1).epsilon(1e-12));
  (void)w1;
}

TEST_CASE("make_mse_loss and make_ce_loss build the matching losses") {
  MlpSpec spec{{1, 4, 1}, Activation::Relu};
  Rng rng(5, 1);
  ParamSet p = init_mlp(spec, rng);
  const Tensor x = Tensor::matrix(3, 1, {-1.0, 0.0, 2.0});
  const Tensor y = Tensor::matrix(3, 1, {0.5, -0.5, 1.0});

  ad::Tape tape;
  VarSet vars = lift(tape, p, true);
  const double got = make_mse_loss(spec, x, y)(vars).value().item();

  const Tensor pred = forward_mlp_value(spec, p, x);
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double d = pred[i] - y[i];
    want += d * d;
  }
  want /= 3.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));

  MlpSpec cspec{{2, 8, 3}, Activation::Relu};
  Rng crng(6, 1);
  ParamSet cp = init_mlp(cspec, crng);
  const Tensor cx = Tensor::matrix(2, 2, {0.1, -0.2, 0.4, 0.9});
  const Tensor onehot = Tensor::matrix(2, 3, {1, 0, 0, 0, 0, 1});

  ad::Tape ctape;
  VarSet cvars = lift(ctape, cp, true);
  const double cgot = make_ce_loss(cspec, cx, onehot)(cvars).value().item();

  const Tensor logits = forward_mlp_value(cspec, cp, cx);
  double cwant = 0.0;
  for (std::size_t r = 0; r < 2; ++r) {
    double mx = logits[r * 3];
    for (std::size_t j = 1; j < 3; ++j) mx = std::max(mx, logits[r * 3 + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < 3; ++j) z += std::exp(logits[r * 3 + j] - mx);
    std::size_t label = (r == 0) ? 0 : 2;
    cwant += -(logits[r * 3 + label] - mx - std::log(z));
  }
  cwant /= 2.0;
  CHECK(cgot == doctest::Approx(cwant).epsilon(1e-12));
}
