#include "metasgd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

namespace metasgd::ad {

namespace {

// Numeric kernels. Forward construction and the non-graph backward sweep
// both call these, and the graph backward sweep emits nodes whose values
// are computed by them, so the two backward modes agree bit for bit.

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  auto src = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(src[i]);
  return Tensor::from_flat(a.dims(), std::move(out));
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  std::vector<double> out(a.numel());
  auto sa = a.data();
  auto sb = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(sa[i], sb[i]);
  return Tensor::from_flat(a.dims(), std::move(out));
}

Tensor k_add(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, [](double x, double y) { return x + y; });
}
Tensor k_sub(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, [](double x, double y) { return x - y; });
}
Tensor k_mul(const Tensor& a, const Tensor& b) {
  return map_binary(a, b, [](double x, double y) { return x * y; });
}
Tensor k_neg(const Tensor& a) {
  return map_unary(a, [](double x) { return -x; });
}
Tensor k_square(const Tensor& a) {
  return map_unary(a, [](double x) { return x * x; });
}
Tensor k_exp(const Tensor& a) {
  return map_unary(a, [](double x) { return std::exp(x); });
}
Tensor k_log(const Tensor& a) {
  return map_unary(a, [](double x) { return std::log(x); });
}
Tensor k_relu(const Tensor& a) {
  return map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
}
Tensor k_tanh(const Tensor& a) {
  return map_unary(a, [](double x) { return std::tanh(x); });
}
Tensor k_sigmoid(const Tensor& a) {
  return map_unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}
Tensor k_sin(const Tensor& a) {
  return map_unary(a, [](double x) { return std::sin(x); });
}
Tensor k_cos(const Tensor& a) {
  return map_unary(a, [](double x) { return std::cos(x); });
}
Tensor k_recip(const Tensor& a) {
  return map_unary(a, [](double x) { return 1.0 / x; });
}
Tensor k_step(const Tensor& a) {
  return map_unary(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}
Tensor k_scale(const Tensor& a, double c) {
  return map_unary(a, [c](double x) { return c * x; });
}

Tensor k_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.rows(), m = a.cols(), n = b.cols();
  std::vector<double> out(r * n, 0.0);
  auto sa = a.data();
  auto sb = b.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = sa[i * m + k];
      const double* brow = &sb[k * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  return Tensor::matrix(r, n, std::move(out));
}

Tensor k_transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  auto src = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = src[i * c + j];
  return Tensor::matrix(c, r, std::move(out));
}

Tensor k_add_bias_row(const Tensor& m, const Tensor& bias) {
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(r * c);
  auto sm = m.data();
  auto sb = bias.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = sm[i * c + j] + sb[j];
  return Tensor::matrix(r, c, std::move(out));
}

Tensor k_row_sum(const Tensor& m) {
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(r, 0.0);
  auto src = m.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += src[i * c + j];
  return Tensor::vector(std::move(out));
}

Tensor k_col_sum(const Tensor& m) {
  const std::size_t r = m.rows(), c = m.cols();
  std::vector<double> out(c, 0.0);
  auto src = m.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += src[i * c + j];
  return Tensor::vector(std::move(out));
}

Tensor k_repeat_row(const Tensor& v, std::size_t rows) {
  const std::size_t c = v.numel();
  std::vector<double> out(rows * c);
  auto src = v.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = src[j];
  return Tensor::matrix(rows, c, std::move(out));
}

Tensor k_repeat_col(const Tensor& v, std::size_t cols) {
  const std::size_t r = v.numel();
  std::vector<double> out(r * cols);
  auto src = v.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = src[i];
  return Tensor::matrix(r, cols, std::move(out));
}

Tensor k_broadcast_scalar(const Tensor& s, const std::vector<std::size_t>& dims) {
  return Tensor::full(dims, s[0]);
}

Tensor k_sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return Tensor::scalar(acc);
}

Tensor k_mean_all(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return Tensor::scalar(acc / static_cast<double>(a.numel()));
}

Tensor k_concat(const Tensor& a, const Tensor& b) {
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return Tensor::vector(std::move(out));
}

Tensor k_slice(const Tensor& v, std::size_t offset, std::size_t len) {
  auto src = v.data();
  std::vector<double> out(src.begin() + static_cast<std::ptrdiff_t>(offset),
                          src.begin() + static_cast<std::ptrdiff_t>(offset + len));
  return Tensor::vector(std::move(out));
}

Tensor k_embed_slice(const Tensor& v, std::size_t offset, std::size_t total) {
  std::vector<double> out(total, 0.0);
  auto src = v.data();
  for (std::size_t i = 0; i < src.size(); ++i) out[offset + i] = src[i];
  return Tensor::vector(std::move(out));
}

Tensor k_reshape(const Tensor& a, const std::vector<std::size_t>& dims) {
  return a.reshaped(dims);
}

void k_add_inplace(Tensor& a, const Tensor& b) {
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) da[i] += db[i];
}

void require_same_tape(const Var& a, const Var& b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    throw ShapeError(std::string(op) + ": operands live on different tapes");
}

void require_same_dims(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_dims(b.value()))
    throw ShapeError(std::string(op) + ": dims mismatch " + dims_to_string(a.dims()) + " vs " +
                     dims_to_string(b.dims()));
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + dims_to_string(a.dims()));
}

void require_vector(const Var& a, const char* op) {
  if (a.value().rank() != 1)
    throw ShapeError(std::string(op) + ": expected a vector, got " + dims_to_string(a.dims()));
}

Var push_unary(OpKind op, const Var& a, Tensor value, std::size_t aux = 0, double payload = 0.0) {
  Node n;
  n.op = op;
  n.inputs = {a.id(), 0};
  n.n_inputs = 1;
  n.requires_grad = a.requires_grad();
  n.aux = aux;
  n.payload = payload;
  n.value = std::move(value);
  return a.tape()->emplace(std::move(n));
}

Var push_binary(OpKind op, const Var& a, const Var& b, Tensor value) {
  Node n;
  n.op = op;
  n.inputs = {a.id(), b.id()};
  n.n_inputs = 2;
  n.requires_grad = a.requires_grad() || b.requires_grad();
  n.value = std::move(value);
  return a.tape()->emplace(std::move(n));
}

}  // namespace

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ShapeError("Var is not bound to a tape");
  return tape_->node(id_).value;
}

bool Var::requires_grad() const {
  if (tape_ == nullptr) throw ShapeError("Var is not bound to a tape");
  return tape_->node(id_).requires_grad;
}

Var Tape::emplace(Node n) {
  if (nodes_.size() >= std::numeric_limits<NodeId>::max())
    throw NumericError("tape overflow: too many nodes");
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

Var var(Tape& tape, Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf tensor contains non-finite values");
  Node n;
  n.op = OpKind::Leaf;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  return tape.emplace(std::move(n));
}

Var constant(Tape& tape, Tensor value) { return var(tape, std::move(value), false); }

Var add(const Var& a, const Var& b) {
  require_same_tape(a, b, "add");
  require_same_dims(a, b, "add");
  return push_binary(OpKind::Add, a, b, k_add(a.value(), b.value()));
}

Var sub(const Var& a, const Var& b) {
  require_same_tape(a, b, "sub");
  require_same_dims(a, b, "sub");
  return push_binary(OpKind::Sub, a, b, k_sub(a.value(), b.value()));
}

Var mul(const Var& a, const Var& b) {
  require_same_tape(a, b, "mul");
  require_same_dims(a, b, "mul");
  return push_binary(OpKind::Mul, a, b, k_mul(a.value(), b.value()));
}

Var neg(const Var& a) { return push_unary(OpKind::Neg, a, k_neg(a.value())); }
Var square(const Var& a) { return push_unary(OpKind::Square, a, k_square(a.value())); }

Var exp(const Var& a) {
  Tensor v = k_exp(a.value());
  if (!v.all_finite()) throw NumericError("exp overflowed to non-finite values");
  return push_unary(OpKind::Exp, a, std::move(v));
}

Var log(const Var& a) {
  for (double x : a.value().data())
    if (!(x > 0.0)) throw NumericError("log of non-positive operand");
  return push_unary(OpKind::Log, a, k_log(a.value()));
}

Var relu(const Var& a) { return push_unary(OpKind::Relu, a, k_relu(a.value())); }
Var tanh(const Var& a) { return push_unary(OpKind::Tanh, a, k_tanh(a.value())); }
Var sigmoid(const Var& a) { return push_unary(OpKind::Sigmoid, a, k_sigmoid(a.value())); }
Var sin(const Var& a) { return push_unary(OpKind::Sin, a, k_sin(a.value())); }
Var cos(const Var& a) { return push_unary(OpKind::Cos, a, k_cos(a.value())); }

Var recip(const Var& a) {
  for (double x : a.value().data())
    if (x == 0.0) throw NumericError("reciprocal of zero");
  return push_unary(OpKind::Recip, a, k_recip(a.value()));
}

Var step_pos(const Var& a) { return push_unary(OpKind::StepPos, a, k_step(a.value())); }

Var scale(const Var& a, double c) {
  if (!std::isfinite(c)) throw NumericError("scale by non-finite constant");
  return push_unary(OpKind::Scale, a, k_scale(a.value(), c), 0, c);
}

Var matmul(const Var& a, const Var& b) {
  require_same_tape(a, b, "matmul");
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.value().cols() != b.value().rows())
    throw ShapeError("matmul: inner dims mismatch " + dims_to_string(a.dims()) + " x " +
                     dims_to_string(b.dims()));
  return push_binary(OpKind::MatMul, a, b, k_matmul(a.value(), b.value()));
}

Var transpose(const Var& a) {
  require_matrix(a, "transpose");
  return push_unary(OpKind::Transpose, a, k_transpose(a.value()));
}

Var add_bias_row(const Var& m, const Var& bias) {
  require_same_tape(m, bias, "add_bias_row");
  require_matrix(m, "add_bias_row");
  require_vector(bias, "add_bias_row");
  if (bias.value().numel() != m.value().cols())
    throw ShapeError("add_bias_row: bias length " + std::to_string(bias.value().numel()) +
                     " does not match matrix cols " + std::to_string(m.value().cols()));
  return push_binary(OpKind::AddBiasRow, m, bias, k_add_bias_row(m.value(), bias.value()));
}

Var row_sum(const Var& m) {
  require_matrix(m, "row_sum");
  return push_unary(OpKind::RowSum, m, k_row_sum(m.value()));
}

Var col_sum(const Var& m) {
  require_matrix(m, "col_sum");
  return push_unary(OpKind::ColSum, m, k_col_sum(m.value()));
}

Var repeat_row(const Var& v, std::size_t rows) {
  require_vector(v, "repeat_row");
  if (rows == 0) throw ShapeError("repeat_row: rows must be positive");
  return push_unary(OpKind::RepeatRow, v, k_repeat_row(v.value(), rows), rows);
}

Var repeat_col(const Var& v, std::size_t cols) {
  require_vector(v, "repeat_col");
  if (cols == 0) throw ShapeError("repeat_col: cols must be positive");
  return push_unary(OpKind::RepeatCol, v, k_repeat_col(v.value(), cols), cols);
}

Var broadcast_scalar(const Var& s, std::vector<std::size_t> dims) {
  if (s.value().numel() != 1)
    throw ShapeError("broadcast_scalar: expected a single-element tensor, got " +
                     dims_to_string(s.dims()));
  return push_unary(OpKind::BroadcastScalar, s, k_broadcast_scalar(s.value(), dims));
}

Var sum(const Var& a) { return push_unary(OpKind::SumAll, a, k_sum_all(a.value())); }
Var mean(const Var& a) { return push_unary(OpKind::MeanAll, a, k_mean_all(a.value())); }

Var concat(const Var& a, const Var& b) {
  require_same_tape(a, b, "concat");
  require_vector(a, "concat");
  require_vector(b, "concat");
  return push_binary(OpKind::Concat2, a, b, k_concat(a.value(), b.value()));
}

Var slice(const Var& v, std::size_t offset, std::size_t len) {
  require_vector(v, "slice");
  if (len == 0 || offset + len > v.value().numel())
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " +
                     std::to_string(offset + len) + ") out of bounds for length " +
                     std::to_string(v.value().numel()));
  return push_unary(OpKind::Slice, v, k_slice(v.value(), offset, len), offset);
}

Var embed_slice(const Var& v, std::size_t offset, std::size_t total) {
  require_vector(v, "embed_slice");
  if (offset + v.value().numel() > total)
    throw ShapeError("embed_slice: slice does not fit in target length " + std::to_string(total));
  return push_unary(OpKind::EmbedSlice, v, k_embed_slice(v.value(), offset, total), offset);
}

Var reshape(const Var& a, std::vector<std::size_t> dims) {
  return push_unary(OpKind::Reshape, a, a.value().reshaped(std::move(dims)));
}

Var mse_loss(const Var& pred, const Tensor& target) {
  if (!pred.value().same_dims(target))
    throw ShapeError("mse_loss: prediction dims " + dims_to_string(pred.dims()) +
                     " do not match target dims " + dims_to_string(target.dims()));
  Var t = constant(*pred.tape(), target);
  return mean(square(sub(pred, t)));
}

Var softmax_cross_entropy(const Var& logits, const Tensor& onehot_labels) {
  require_matrix(logits, "softmax_cross_entropy");
  if (!logits.value().same_dims(onehot_labels))
    throw ShapeError("softmax_cross_entropy: logits dims " + dims_to_string(logits.dims()) +
                     " do not match labels dims " + dims_to_string(onehot_labels.dims()));
  const std::size_t r = onehot_labels.rows(), c = onehot_labels.cols();
  for (std::size_t i = 0; i < r; ++i) {
    double row_total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double v = onehot_labels.at(i, j);
      if (v != 0.0 && v != 1.0)
        throw ShapeError("softmax_cross_entropy: labels must be one-hot");
      row_total += v;
    }
    if (row_total != 1.0) throw ShapeError("softmax_cross_entropy: labels must be one-hot");
  }

  // The row maximum enters as a constant: subtracting any fixed per-row
  // offset leaves both the loss value's meaning and its gradient exact.
  std::vector<double> maxes(r);
  for (std::size_t i = 0; i < r; ++i) {
    double m = logits.value().at(i, 0);
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, logits.value().at(i, j));
    maxes[i] = m;
  }
  Tape& tape = *logits.tape();
  Var max_rows = repeat_col(constant(tape, Tensor::vector(std::move(maxes))), c);
  Var shifted = sub(logits, max_rows);
  Var log_norm = log(row_sum(exp(shifted)));
  Var picked = row_sum(mul(shifted, constant(tape, onehot_labels)));
  return mean(sub(log_norm, picked));
}

namespace {

struct GraphAlg {
  using G = Var;
  Tape* tape;

  G val(NodeId id) const { return Var(tape, id); }
  G ones(const std::vector<std::size_t>& dims) const {
    return constant(*tape, Tensor::full(dims, 1.0));
  }
  G add(const G& a, const G& b) const { return ad::add(a, b); }
  G sub(const G& a, const G& b) const { return ad::sub(a, b); }
  G mul(const G& a, const G& b) const { return ad::mul(a, b); }
  G neg(const G& a) const { return ad::neg(a); }
  G scale(const G& a, double c) const { return ad::scale(a, c); }
  G square(const G& a) const { return ad::square(a); }
  G recip(const G& a) const { return ad::recip(a); }
  G sin(const G& a) const { return ad::sin(a); }
  G cos(const G& a) const { return ad::cos(a); }
  G step(const G& a) const { return ad::step_pos(a); }
  G matmul(const G& a, const G& b) const { return ad::matmul(a, b); }
  G transpose(const G& a) const { return ad::transpose(a); }
  G row_sum(const G& a) const { return ad::row_sum(a); }
  G col_sum(const G& a) const { return ad::col_sum(a); }
  G repeat_row(const G& a, std::size_t r) const { return ad::repeat_row(a, r); }
  G repeat_col(const G& a, std::size_t c) const { return ad::repeat_col(a, c); }
  G broadcast(const G& a, const std::vector<std::size_t>& dims) const {
    return ad::broadcast_scalar(a, dims);
  }
  G sum_all(const G& a) const { return ad::sum(a); }
  G reshape(const G& a, const std::vector<std::size_t>& dims) const { return ad::reshape(a, dims); }
  G slice(const G& a, std::size_t offset, std::size_t len) const {
    return ad::slice(a, offset, len);
  }
  G embed(const G& a, std::size_t offset, std::size_t total) const {
    return ad::embed_slice(a, offset, total);
  }
  void acc(std::optional<G>& slot, G contrib) const {
    slot = slot ? ad::add(*slot, std::move(contrib)) : std::move(contrib);
  }
};

struct NumericAlg {
  using G = Tensor;
  const Tape* tape;

  const Tensor& val(NodeId id) const { return tape->node(id).value; }
  G ones(const std::vector<std::size_t>& dims) const { return Tensor::full(dims, 1.0); }
  G add(const G& a, const G& b) const { return k_add(a, b); }
  G sub(const G& a, const G& b) const { return k_sub(a, b); }
  G mul(const G& a, const G& b) const { return k_mul(a, b); }
  G neg(const G& a) const { return k_neg(a); }
  G scale(const G& a, double c) const { return k_scale(a, c); }
  G square(const G& a) const { return k_square(a); }
  G recip(const G& a) const { return k_recip(a); }
  G sin(const G& a) const { return k_sin(a); }
  G cos(const G& a) const { return k_cos(a); }
  G step(const G& a) const { return k_step(a); }
  G matmul(const G& a, const G& b) const { return k_matmul(a, b); }
  G transpose(const G& a) const { return k_transpose(a); }
  G row_sum(const G& a) const { return k_row_sum(a); }
  G col_sum(const G& a) const { return k_col_sum(a); }
  G repeat_row(const G& a, std::size_t r) const { return k_repeat_row(a, r); }
  G repeat_col(const G& a, std::size_t c) const { return k_repeat_col(a, c); }
  G broadcast(const G& a, const std::vector<std::size_t>& dims) const {
    return k_broadcast_scalar(a, dims);
  }
  G sum_all(const G& a) const { return k_sum_all(a); }
  G reshape(const G& a, const std::vector<std::size_t>& dims) const { return k_reshape(a, dims); }
  G slice(const G& a, std::size_t offset, std::size_t len) const { return k_slice(a, offset, len); }
  G embed(const G& a, std::size_t offset, std::size_t total) const {
    return k_embed_slice(a, offset, total);
  }
  void acc(std::optional<G>& slot, G contrib) const {
    if (slot)
      k_add_inplace(*slot, contrib);
    else
      slot = std::move(contrib);
  }
};

std::vector<char> mark_needed(const Tape& tape, NodeId out_id) {
  std::vector<char> needed(static_cast<std::size_t>(out_id) + 1, 0);
  needed[out_id] = 1;
  for (NodeId id = out_id;; --id) {
    const Node& n = tape.node(id);
    if (needed[id] && n.requires_grad) {
      for (std::uint8_t k = 0; k < n.n_inputs; ++k) {
        const NodeId in = n.inputs[k];
        if (tape.node(in).requires_grad) needed[in] = 1;
      }
    }
    if (id == 0) break;
  }
  return needed;
}

bool g_fault_active = false;
OpKind g_fault_kind = OpKind::Leaf;

template <typename Alg>
std::vector<std::optional<typename Alg::G>> run_backward(const Tape& tape, NodeId out_id,
                                                         const Alg& alg) {
  using G = typename Alg::G;
  const std::vector<char> needed = mark_needed(tape, out_id);
  std::vector<std::optional<G>> adj(static_cast<std::size_t>(out_id) + 1);
  adj[out_id] = alg.ones(tape.node(out_id).value.dims());

  for (NodeId id = out_id;; --id) {
    const Node& n = tape.node(id);
    if (needed[id] && n.requires_grad && adj[id]) {
      G faulted;
      const bool fault_here = g_fault_active && n.op == g_fault_kind;
      if (fault_here) faulted = alg.scale(*adj[id], 1.001);
      const G& g = fault_here ? faulted : *adj[id];
      const NodeId a = n.inputs[0];
      const NodeId b = n.inputs[1];
      auto rg = [&](NodeId in) { return tape.node(in).requires_grad; };
      auto out = [&](NodeId in, G contrib) { alg.acc(adj[in], std::move(contrib)); };

      switch (n.op) {
        case OpKind::Leaf:
        case OpKind::StepPos:
          break;
        case OpKind::Add:
          if (rg(a)) out(a, g);
          if (rg(b)) out(b, g);
          break;
        case OpKind::Sub:
          if (rg(a)) out(a, g);
          if (rg(b)) out(b, alg.neg(g));
          break;
        case OpKind::Mul:
          if (rg(a)) out(a, alg.mul(g, alg.val(b)));
          if (rg(b)) out(b, alg.mul(g, alg.val(a)));
          break;
        case OpKind::Neg:
          if (rg(a)) out(a, alg.neg(g));
          break;
        case OpKind::Square:
          if (rg(a)) out(a, alg.scale(alg.mul(g, alg.val(a)), 2.0));
          break;
        case OpKind::Exp:
          if (rg(a)) out(a, alg.mul(g, alg.val(id)));
          break;
        case OpKind::Log:
          if (rg(a)) out(a, alg.mul(g, alg.recip(alg.val(a))));
          break;
        case OpKind::Relu:
          if (rg(a)) out(a, alg.mul(g, alg.step(alg.val(a))));
          break;
        case OpKind::Tanh:
          if (rg(a)) out(a, alg.sub(g, alg.mul(g, alg.square(alg.val(id)))));
          break;
        case OpKind::Sigmoid:
          if (rg(a)) out(a, alg.mul(g, alg.sub(alg.val(id), alg.square(alg.val(id)))));
          break;
        case OpKind::Sin:
          if (rg(a)) out(a, alg.mul(g, alg.cos(alg.val(a))));
          break;
        case OpKind::Cos:
          if (rg(a)) out(a, alg.neg(alg.mul(g, alg.sin(alg.val(a)))));
          break;
        case OpKind::Recip:
          if (rg(a)) out(a, alg.neg(alg.mul(g, alg.square(alg.val(id)))));
          break;
        case OpKind::Scale:
          if (rg(a)) out(a, alg.scale(g, n.payload));
          break;
        case OpKind::MatMul:
          if (rg(a)) out(a, alg.matmul(g, alg.transpose(alg.val(b))));
          if (rg(b)) out(b, alg.matmul(alg.transpose(alg.val(a)), g));
          break;
        case OpKind::Transpose:
          if (rg(a)) out(a, alg.transpose(g));
          break;
        case OpKind::AddBiasRow:
          if (rg(a)) out(a, g);
          if (rg(b)) out(b, alg.col_sum(g));
          break;
        case OpKind::RowSum:
          if (rg(a)) out(a, alg.repeat_col(g, tape.node(a).value.cols()));
          break;
        case OpKind::ColSum:
          if (rg(a)) out(a, alg.repeat_row(g, tape.node(a).value.rows()));
          break;
        case OpKind::RepeatRow:
          if (rg(a)) out(a, alg.col_sum(g));
          break;
        case OpKind::RepeatCol:
          if (rg(a)) out(a, alg.row_sum(g));
          break;
        case OpKind::BroadcastScalar:
          if (rg(a)) out(a, alg.reshape(alg.sum_all(g), tape.node(a).value.dims()));
          break;
        case OpKind::SumAll:
          if (rg(a)) out(a, alg.broadcast(g, tape.node(a).value.dims()));
          break;
        case OpKind::MeanAll:
          if (rg(a))
            out(a, alg.scale(alg.broadcast(g, tape.node(a).value.dims()),
                             1.0 / static_cast<double>(tape.node(a).value.numel())));
          break;
        case OpKind::Concat2: {
          const std::size_t la = tape.node(a).value.numel();
          const std::size_t lb = tape.node(b).value.numel();
          if (rg(a)) out(a, alg.slice(g, 0, la));
          if (rg(b)) out(b, alg.slice(g, la, lb));
          break;
        }
        case OpKind::Slice:
          if (rg(a)) out(a, alg.embed(g, n.aux, tape.node(a).value.numel()));
          break;
        case OpKind::EmbedSlice:
          if (rg(a)) out(a, alg.slice(g, n.aux, tape.node(a).value.numel()));
          break;
        case OpKind::Reshape:
          if (rg(a)) out(a, alg.reshape(g, tape.node(a).value.dims()));
          break;
      }
    }
    if (id == 0) break;
  }
  return adj;
}

}  // namespace

std::vector<Var> grad(const Var& output, std::span<const Var> inputs, bool create_graph) {
  Tape* tape = output.tape();
  if (tape == nullptr) throw ShapeError("grad: output is not bound to a tape");
  for (const Var& v : inputs)
    if (v.tape() != tape) throw ShapeError("grad: inputs live on a different tape than output");
  if (output.value().numel() != 1)
    throw ShapeError("grad: output must be a scalar, got " + dims_to_string(output.dims()));
  if (!output.value().all_finite()) throw NumericError("grad: output is non-finite");

  const NodeId out_id = output.id();
  std::vector<Var> results;
  results.reserve(inputs.size());

  if (create_graph) {
    GraphAlg alg{tape};
    auto adj = run_backward(*tape, out_id, alg);
    for (const Var& v : inputs) {
      if (v.id() <= out_id && adj[v.id()])
        results.push_back(*adj[v.id()]);
      else
        results.push_back(constant(*tape, Tensor::zeros(v.dims())));
    }
  } else {
    NumericAlg alg{tape};
    auto adj = run_backward(*tape, out_id, alg);
    for (const Var& v : inputs) {
      if (v.id() <= out_id && adj[v.id()])
        results.push_back(var(*tape, *adj[v.id()], false));
      else
        results.push_back(constant(*tape, Tensor::zeros(v.dims())));
    }
  }
  return results;
}

void set_gradient_fault(const std::string& op_name) {
  if (op_name.empty()) {
    g_fault_active = false;
    return;
  }
  static const std::pair<const char*, OpKind> table[] = {
      {"add", OpKind::Add},
      {"sub", OpKind::Sub},
      {"mul", OpKind::Mul},
      {"neg", OpKind::Neg},
      {"square", OpKind::Square},
      {"exp", OpKind::Exp},
      {"log", OpKind::Log},
      {"relu", OpKind::Relu},
      {"tanh", OpKind::Tanh},
      {"sigmoid", OpKind::Sigmoid},
      {"sin", OpKind::Sin},
      {"cos", OpKind::Cos},
      {"recip", OpKind::Recip},
      {"step_pos", OpKind::StepPos},
      {"scale", OpKind::Scale},
      {"matmul", OpKind::MatMul},
      {"transpose", OpKind::Transpose},
      {"add_bias_row", OpKind::AddBiasRow},
      {"row_sum", OpKind::RowSum},
      {"col_sum", OpKind::ColSum},
      {"repeat_row", OpKind::RepeatRow},
      {"repeat_col", OpKind::RepeatCol},
      {"broadcast_scalar", OpKind::BroadcastScalar},
      {"sum", OpKind::SumAll},
      {"mean", OpKind::MeanAll},
      {"concat", OpKind::Concat2},
      {"slice", OpKind::Slice},
      {"embed_slice", OpKind::EmbedSlice},
      {"reshape", OpKind::Reshape},
  };
  for (const auto& [name, kind] : table) {
    if (op_name == name) {
      g_fault_kind = kind;
      g_fault_active = true;
      return;
    }
  }
  throw ShapeError("set_gradient_fault: unknown op '" + op_name + "'");
}

}  // namespace metasgd::ad
