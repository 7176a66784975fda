#pragma once

#include <string>
#include <utility>
#include <vector>

#include "metasgd/autodiff.hpp"
#include "metasgd/rng.hpp"
#include "metasgd/tensor.hpp"

namespace metasgd {

/// Ordered collection of named tensors. Order is part of the contract: it
/// fixes flattening, checkpoint layout, and optimizer state alignment.
struct ParamSet {
  std::vector<std::pair<std::string, Tensor>> items;

  void add(std::string name, Tensor t);
  std::size_t size() const { return items.size(); }
  bool has(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::size_t total_numel() const;
};

/// Mirror of ParamSet whose entries are tape nodes.
struct VarSet {
  std::vector<std::pair<std::string, ad::Var>> items;

  void add(std::string name, ad::Var v);
  std::size_t size() const { return items.size(); }
  const ad::Var& at(const std::string& name) const;
};

/// Registers every tensor of `params` as a leaf on `tape`, same names and order.
VarSet lift(ad::Tape& tape, const ParamSet& params, bool requires_grad);

/// Snapshot of current values, same names and order.
ParamSet values_of(const VarSet& vars);

/// New set with identical names/dims, every element set to `v`.
ParamSet like_filled(const ParamSet& ref, double v);

/// Entries [begin, end) as a new set.
ParamSet subset_range(const ParamSet& p, std::size_t begin, std::size_t end);
VarSet subset_range(const VarSet& p, std::size_t begin, std::size_t end);

/// Entries whose names start with `prefix`, with the prefix stripped.
ParamSet subset_with_prefix(const ParamSet& p, const std::string& prefix);
VarSet subset_with_prefix(const VarSet& p, const std::string& prefix);

enum class Activation { Relu, Tanh };

/// Fully connected net: layers lists the widths input first, e.g. {1, 40, 40, 1}.
/// Hidden layers use `hidden`; the output layer is linear.
struct MlpSpec {
  std::vector<std::size_t> layers{1, 40, 40, 1};
  Activation hidden = Activation::Relu;
};

std::size_t mlp_layer_count(const MlpSpec& spec);

/// Weights w{i}: [layers[i] x layers[i+1]] from a truncated normal (sd 0.01,
/// clipped at two standard deviations); biases b{i} zero. Entry order is
/// w0, b0, w1, b1, ... and weight elements are drawn row-major, so the
/// consumed random stream is reproducible.
ParamSet init_mlp(const MlpSpec& spec, Rng& rng);

/// init_mlp plus a trailing "log_var" vector (one log-variance per output
/// unit) initialized to zero, for diagonal-Gaussian policies.
ParamSet init_policy(const MlpSpec& spec, Rng& rng);

/// x: [n x layers.front()] -> [n x layers.back()]. Looks up unprefixed
/// names w0, b0, ...
ad::Var forward_mlp(const MlpSpec& spec, const VarSet& params, const ad::Var& x);

/// Tape-free forward pass with loop order matching the autodiff kernels,
/// so values agree bitwise with forward_mlp on the same inputs.
Tensor forward_mlp_value(const MlpSpec& spec, const ParamSet& params, const Tensor& x);

}  // namespace metasgd
