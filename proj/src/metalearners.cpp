#include "metasgd/metalearners.hpp"

#include <cmath>
#include <string>

namespace metasgd {

namespace {

void require_finite_loss(const ad::Var& loss, int step) {
  const Tensor& v = loss.value();
  if (v.numel() != 1) throw ShapeError("inner loss must be a scalar");
  if (!std::isfinite(v[0]))
    throw NumericError("non-finite training loss at inner step " + std::to_string(step));
}

std::vector<ad::Var> vars_of(const VarSet& s) {
  std::vector<ad::Var> out;
  out.reserve(s.size());
  for (const auto& [name, v] : s.items) out.push_back(v);
  return out;
}

ad::Var flatten_vars(const std::vector<ad::Var>& vs) {
  ad::Var acc = ad::reshape(vs.front(), {vs.front().value().numel()});
  for (std::size_t i = 1; i < vs.size(); ++i)
    acc = ad::concat(acc, ad::reshape(vs[i], {vs[i].value().numel()}));
  return acc;
}

VarSet unflatten_like(const ad::Var& flat, const VarSet& ref) {
  VarSet out;
  std::size_t offset = 0;
  for (const auto& [name, v] : ref.items) {
    const std::size_t n = v.value().numel();
    ad::Var piece = ad::slice(flat, offset, n);
    if (v.value().rank() != 1) piece = ad::reshape(piece, v.value().dims());
    out.add(name, piece);
    offset += n;
  }
  return out;
}

VarSet merge(const VarSet& a, const VarSet& b) {
  VarSet out = a;
  for (const auto& [name, v] : b.items) out.add(name, v);
  return out;
}

}  // namespace

LossBuilder make_mse_loss(const MlpSpec& spec, Tensor x, Tensor y) {
  if (x.rank() != 2 || x.rows() == 0) throw ShapeError("make_mse_loss: empty or non-matrix inputs");
  if (y.rank() != 2 || y.rows() != x.rows())
    throw ShapeError("make_mse_loss: targets dims " + dims_to_string(y.dims()) +
                     " do not pair with inputs " + dims_to_string(x.dims()));
  return [spec, x = std::move(x), y = std::move(y)](const VarSet& params) {
    ad::Tape& tape = *params.items.front().second.tape();
    ad::Var pred = forward_mlp(spec, params, ad::constant(tape, x));
    return ad::mse_loss(pred, y);
  };
}

LossBuilder make_ce_loss(const MlpSpec& spec, Tensor x, Tensor onehot_y) {
  if (x.rank() != 2 || x.rows() == 0) throw ShapeError("make_ce_loss: empty or non-matrix inputs");
  if (onehot_y.rank() != 2 || onehot_y.rows() != x.rows())
    throw ShapeError("make_ce_loss: labels dims " + dims_to_string(onehot_y.dims()) +
                     " do not pair with inputs " + dims_to_string(x.dims()));
  return [spec, x = std::move(x), y = std::move(onehot_y)](const VarSet& params) {
    ad::Tape& tape = *params.items.front().second.tape();
    ad::Var logits = forward_mlp(spec, params, ad::constant(tape, x));
    return ad::softmax_cross_entropy(logits, y);
  };
}

AdaptResult meta_sgd_adapt(const VarSet& theta, const VarSet& alpha, const LossBuilder& loss,
                           int inner_steps, bool create_graph) {
  if (inner_steps < 0) throw ShapeError("meta_sgd_adapt: negative inner step count");
  if (alpha.size() != theta.size())
    throw ShapeError("meta_sgd_adapt: alpha must mirror theta entry for entry");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (alpha.items[i].first != theta.items[i].first ||
        !alpha.items[i].second.value().same_dims(theta.items[i].second.value()))
      throw ShapeError("meta_sgd_adapt: alpha entry '" + alpha.items[i].first +
                       "' does not mirror theta");
  }

  AdaptResult result;
  VarSet cur = theta;
  for (int t = 0; t < inner_steps; ++t) {
    ad::Var train_loss = loss(cur);
    require_finite_loss(train_loss, t);
    result.train_losses.push_back(train_loss.value()[0]);
    std::vector<ad::Var> grads = ad::grad(train_loss, vars_of(cur), create_graph);
    VarSet next;
    for (std::size_t i = 0; i < cur.size(); ++i)
      next.add(cur.items[i].first,
               ad::sub(cur.items[i].second, ad::mul(alpha.items[i].second, grads[i])));
    cur = std::move(next);
  }
  result.adapted = std::move(cur);
  return result;
}

AdaptResult maml_adapt(const VarSet& theta, double alpha_scalar, int inner_steps,
                       const LossBuilder& loss, bool create_graph) {
  if (inner_steps < 0) throw ShapeError("maml_adapt: negative inner step count");
  if (!(alpha_scalar > 0.0)) throw ShapeError("maml_adapt: alpha_scalar must be positive");

  AdaptResult result;
  VarSet cur = theta;
  for (int t = 0; t < inner_steps; ++t) {
    ad::Var train_loss = loss(cur);
    require_finite_loss(train_loss, t);
    result.train_losses.push_back(train_loss.value()[0]);
    std::vector<ad::Var> grads = ad::grad(train_loss, vars_of(cur), create_graph);
    VarSet next;
    for (std::size_t i = 0; i < cur.size(); ++i)
      next.add(cur.items[i].first, ad::sub(cur.items[i].second, ad::scale(grads[i], alpha_scalar)));
    cur = std::move(next);
  }
  result.adapted = std::move(cur);
  return result;
}

LstmStepResult lstm_lr_step(const VarSet& phi, const ad::Var& theta2_flat, const ad::Var& loss,
                            const ad::Var& grad_flat, const ad::Var& h_prev, const ad::Var& c_prev,
                            double beta, std::size_t hidden) {
  if (!(beta > 0.0)) throw ShapeError("lstm_lr_step: beta must be positive");
  const std::size_t n = theta2_flat.value().numel();
  if (grad_flat.value().numel() != n)
    throw ShapeError("lstm_lr_step: gradient length does not match theta2 length");
  if (loss.value().numel() != 1) throw ShapeError("lstm_lr_step: loss must be a scalar");
  const std::size_t input_dim = 2 * n + 1;
  const std::size_t h4 = 4 * hidden;
  const ad::Var& wx = phi.at("wx");
  const ad::Var& wh = phi.at("wh");
  const ad::Var& b = phi.at("b");
  if (wx.value().rank() != 2 || wx.value().rows() != input_dim || wx.value().cols() != h4 ||
      wh.value().rank() != 2 || wh.value().rows() != hidden || wh.value().cols() != h4 ||
      b.value().numel() != h4)
    throw ShapeError("lstm_lr_step: cell parameter dims do not match input/hidden sizes");

  ad::Var x = ad::concat(ad::concat(ad::reshape(theta2_flat, {n}), ad::reshape(loss, {1})),
                         ad::reshape(grad_flat, {n}));
  ad::Var pre = ad::reshape(
      ad::add_bias_row(ad::add(ad::matmul(ad::reshape(x, {1, input_dim}), wx),
                               ad::matmul(h_prev, wh)),
                       b),
      {h4});
  ad::Var gate_i = ad::sigmoid(ad::slice(pre, 0, hidden));
  ad::Var gate_f = ad::sigmoid(ad::slice(pre, hidden, hidden));
  ad::Var gate_o = ad::sigmoid(ad::slice(pre, 2 * hidden, hidden));
  ad::Var cand = ad::tanh(ad::slice(pre, 3 * hidden, hidden));

  ad::Var c_new = ad::add(ad::mul(gate_f, ad::reshape(c_prev, {hidden})), ad::mul(gate_i, cand));
  ad::Var h_new = ad::mul(gate_o, ad::tanh(c_new));
  ad::Var readout = ad::add(ad::sum(ad::mul(phi.at("w_out"), h_new)), phi.at("b_out"));
  ad::Var alpha = ad::scale(ad::sigmoid(readout), beta);
  return {alpha, ad::reshape(h_new, {1, hidden}), ad::reshape(c_new, {1, hidden})};
}

AdaptResult lstm_adapt(const VarSet& phi, const VarSet& theta1, const VarSet& theta2_init,
                       const LossBuilder& loss, int steps_T, double beta, std::size_t hidden,
                       bool create_graph) {
  if (steps_T < 1) throw ShapeError("lstm_adapt: need at least one inner step");
  if (theta2_init.size() == 0) throw ShapeError("lstm_adapt: theta2 is empty");

  ad::Tape& tape = *phi.items.front().second.tape();
  ad::Var h = ad::constant(tape, Tensor::zeros({1, hidden}));
  ad::Var c = ad::constant(tape, Tensor::zeros({1, hidden}));

  AdaptResult result;
  VarSet th2 = theta2_init;
  for (int t = 0; t < steps_T; ++t) {
    ad::Var train_loss = loss(merge(theta1, th2));
    require_finite_loss(train_loss, t);
    result.train_losses.push_back(train_loss.value()[0]);

    std::vector<ad::Var> grads = ad::grad(train_loss, vars_of(th2), create_graph);
    ad::Var th2_flat = flatten_vars(vars_of(th2));
    ad::Var g_flat = flatten_vars(grads);
    LstmStepResult step = lstm_lr_step(phi, th2_flat, train_loss, g_flat, h, c, beta, hidden);
    h = step.h;
    c = step.c;
    result.rates.push_back(step.alpha.value()[0]);

    ad::Var updated = ad::sub(
        th2_flat, ad::mul(ad::broadcast_scalar(step.alpha, {th2_flat.value().numel()}), g_flat));
    th2 = unflatten_like(updated, th2);
  }
  result.adapted = merge(theta1, th2);
  return result;
}

ParamSet init_lstm_phi(std::size_t input_dim, std::size_t hidden, Rng& rng) {
  if (input_dim == 0 || hidden == 0) throw ShapeError("init_lstm_phi: zero dimension");
  const std::size_t h4 = 4 * hidden;
  auto draw = [&rng] { return rng.uniform(-0.1, 0.1); };

  std::vector<double> wx(input_dim * h4);
  for (double& v : wx) v = draw();
  std::vector<double> wh(hidden * h4);
  for (double& v : wh) v = draw();
  std::vector<double> b(h4);
  for (std::size_t j = 0; j < h4; ++j) {
    const bool forget_block = j >= hidden && j < 2 * hidden;
    b[j] = forget_block ? 1.0 : draw();
  }
  std::vector<double> w_out(hidden);
  for (double& v : w_out) v = draw();

  ParamSet out;
  out.add("wx", Tensor::matrix(input_dim, h4, std::move(wx)));
  out.add("wh", Tensor::matrix(hidden, h4, std::move(wh)));
  out.add("b", Tensor::vector(std::move(b)));
  out.add("w_out", Tensor::vector(std::move(w_out)));
  out.add("b_out", Tensor::scalar(draw()));
  return out;
}

ad::Var meta_loss(const AdaptResult& adapted, const LossBuilder& test_loss) {
  ad::Var out = test_loss(adapted.adapted);
  const Tensor& v = out.value();
  if (v.numel() != 1) throw ShapeError("meta_loss: test loss must be a scalar");
  if (!std::isfinite(v[0])) throw NumericError("non-finite test loss after adaptation");
  return out;
}

}  // namespace metasgd
