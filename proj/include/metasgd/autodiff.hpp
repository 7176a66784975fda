#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "metasgd/tensor.hpp"

namespace metasgd::ad {

using NodeId = std::uint32_t;

enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Neg,
  Square,
  Exp,
  Log,
  Relu,
  Tanh,
  Sigmoid,
  Sin,
  Cos,
  Recip,
  StepPos,  // 1 where x > 0, else 0; derivative is 0 everywhere
  Scale,
  MatMul,
  Transpose,
  AddBiasRow,
  RowSum,     // [r x c] -> [r]
  ColSum,     // [r x c] -> [c]
  RepeatRow,  // [c], r -> [r x c]
  RepeatCol,  // [r], c -> [r x c]
  BroadcastScalar,
  SumAll,
  MeanAll,
  Concat2,
  Slice,
  EmbedSlice,  // place [len] at offset into zeros of [total]
  Reshape,
};

struct Node {
  OpKind op = OpKind::Leaf;
  std::array<NodeId, 2> inputs{0, 0};
  std::uint8_t n_inputs = 0;
  bool requires_grad = false;
  std::size_t aux = 0;  // Slice/EmbedSlice offset, RepeatRow rows, RepeatCol cols
  double payload = 0.0;  // Scale factor
  Tensor value;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
class Var {
public:
  Var() = default;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const std::vector<std::size_t>& dims() const { return value().dims(); }
  bool requires_grad() const;

private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

/// Append-only arena of operation records. Replaying the recorded ops from
/// the leaves reproduces every cached value exactly; input ids are always
/// smaller than the node's own id. A tape and its Vars are confined to one
/// thread; independent tapes may run in parallel.
class Tape {
public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const { return nodes_[id]; }

  /// Drops all nodes (capacity retained); outstanding Vars become invalid.
  void clear() { nodes_.clear(); }

  Var emplace(Node n);

private:
  std::vector<Node> nodes_;
};

/// Appends a leaf holding `value`. Rejects non-finite input.
Var var(Tape& tape, Tensor value, bool requires_grad = false);
Var constant(Tape& tape, Tensor value);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var square(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);  // rejects non-positive operands
Var relu(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var recip(const Var& a);
Var step_pos(const Var& a);
Var scale(const Var& a, double c);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// Adds a length-c bias vector to every row of an [r x c] matrix.
Var add_bias_row(const Var& m, const Var& bias);
Var row_sum(const Var& m);
Var col_sum(const Var& m);
Var repeat_row(const Var& v, std::size_t rows);
Var repeat_col(const Var& v, std::size_t cols);
Var broadcast_scalar(const Var& s, std::vector<std::size_t> dims);
Var sum(const Var& a);
Var mean(const Var& a);
Var concat(const Var& a, const Var& b);
Var slice(const Var& v, std::size_t offset, std::size_t len);
Var embed_slice(const Var& v, std::size_t offset, std::size_t total);
Var reshape(const Var& a, std::vector<std::size_t> dims);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

/// Mean over all elements of the squared difference to `target`.
Var mse_loss(const Var& pred, const Tensor& target);

/// Mean over rows of -log softmax probability of the one-hot class,
/// stabilized by subtracting the (detached) row maximum.
Var softmax_cross_entropy(const Var& logits, const Tensor& onehot_labels);

/// Reverse-mode gradient of a scalar `output` with respect to `inputs`.
///
/// With create_graph the backward sweep emits ordinary forward nodes for
/// every vector-Jacobian product, so the returned Vars are differentiable
/// again (exact gradients-of-gradients). Without it the sweep runs on plain
/// tensors and the results come back as constant leaves (stop-gradient).
/// Inputs unreachable from `output` receive a zero tensor of matching dims.
std::vector<Var> grad(const Var& output, std::span<const Var> inputs, bool create_graph = false);

/// Test hook: while set, backward sweeps scale the named op's incoming
/// adjoint by 1.001, so gradient checks can prove they would catch a wrong
/// kernel. Pass "" to clear; unknown names raise ShapeError.
void set_gradient_fault(const std::string& op_name);

}  // namespace metasgd::ad
