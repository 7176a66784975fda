#include "metasgd/models.hpp"

#include <cmath>

namespace metasgd {

void ParamSet::add(std::string name, Tensor t) {
  if (has(name)) throw ShapeError("ParamSet: duplicate name '" + name + "'");
  items.emplace_back(std::move(name), std::move(t));
}

bool ParamSet::has(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return true;
  return false;
}

const Tensor& ParamSet::at(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return t;
  throw ShapeError("ParamSet: unknown name '" + name + "'");
}

Tensor& ParamSet::at(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return t;
  throw ShapeError("ParamSet: unknown name '" + name + "'");
}

std::size_t ParamSet::total_numel() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items) n += t.numel();
  return n;
}

void VarSet::add(std::string name, ad::Var v) {
  for (const auto& [n, x] : items)
    if (n == name) throw ShapeError("VarSet: duplicate name '" + name + "'");
  items.emplace_back(std::move(name), v);
}

const ad::Var& VarSet::at(const std::string& name) const {
  for (const auto& [n, v] : items)
    if (n == name) return v;
  throw ShapeError("VarSet: unknown name '" + name + "'");
}

VarSet lift(ad::Tape& tape, const ParamSet& params, bool requires_grad) {
  VarSet out;
  for (const auto& [name, t] : params.items) out.add(name, ad::var(tape, t, requires_grad));
  return out;
}

ParamSet values_of(const VarSet& vars) {
  ParamSet out;
  for (const auto& [name, v] : vars.items) out.add(name, v.value());
  return out;
}

ParamSet like_filled(const ParamSet& ref, double v) {
  ParamSet out;
  for (const auto& [name, t] : ref.items) out.add(name, Tensor::full(t.dims(), v));
  return out;
}

ParamSet subset_range(const ParamSet& p, std::size_t begin, std::size_t end) {
  if (begin > end || end > p.size()) throw ShapeError("subset_range: bad range");
  ParamSet out;
  for (std::size_t i = begin; i < end; ++i) out.items.push_back(p.items[i]);
  return out;
}

VarSet subset_range(const VarSet& p, std::size_t begin, std::size_t end) {
  if (begin > end || end > p.size()) throw ShapeError("subset_range: bad range");
  VarSet out;
  for (std::size_t i = begin; i < end; ++i) out.items.push_back(p.items[i]);
  return out;
}

ParamSet subset_with_prefix(const ParamSet& p, const std::string& prefix) {
  ParamSet out;
  for (const auto& [name, t] : p.items)
    if (name.rfind(prefix, 0) == 0) out.add(name.substr(prefix.size()), t);
  return out;
}

VarSet subset_with_prefix(const VarSet& p, const std::string& prefix) {
  VarSet out;
  for (const auto& [name, v] : p.items)
    if (name.rfind(prefix, 0) == 0) out.add(name.substr(prefix.size()), v);
  return out;
}

std::size_t mlp_layer_count(const MlpSpec& spec) {
  if (spec.layers.size() < 2) throw ShapeError("MlpSpec: need at least input and output widths");
  for (std::size_t w : spec.layers)
    if (w == 0) throw ShapeError("MlpSpec: zero-width layer");
  return spec.layers.size() - 1;
}

ParamSet init_mlp(const MlpSpec& spec, Rng& rng) {
  const std::size_t n_layers = mlp_layer_count(spec);
  ParamSet out;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const std::size_t in = spec.layers[i], width = spec.layers[i + 1];
    std::vector<double> w(in * width);
    for (double& x : w) x = rng.truncated_normal(0.01);
    out.add("w" + std::to_string(i), Tensor::matrix(in, width, std::move(w)));
    out.add("b" + std::to_string(i), Tensor::zeros({width}));
  }
  return out;
}

ParamSet init_policy(const MlpSpec& spec, Rng& rng) {
  ParamSet out = init_mlp(spec, rng);
  out.add("log_var", Tensor::zeros({spec.layers.back()}));
  return out;
}

ad::Var forward_mlp(const MlpSpec& spec, const VarSet& params, const ad::Var& x) {
  const std::size_t n_layers = mlp_layer_count(spec);
  if (x.value().rank() != 2 || x.value().cols() != spec.layers.front())
    throw ShapeError("forward_mlp: input dims " + dims_to_string(x.dims()) +
                     " incompatible with layer width " + std::to_string(spec.layers.front()));
  ad::Var h = x;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& w = params.at("w" + std::to_string(i));
    const auto& b = params.at("b" + std::to_string(i));
    h = ad::add_bias_row(ad::matmul(h, w), b);
    if (i + 1 < n_layers) h = spec.hidden == Activation::Relu ? ad::relu(h) : ad::tanh(h);
  }
  return h;
}

Tensor forward_mlp_value(const MlpSpec& spec, const ParamSet& params, const Tensor& x) {
  const std::size_t n_layers = mlp_layer_count(spec);
  if (x.rank() != 2 || x.cols() != spec.layers.front())
    throw ShapeError("forward_mlp_value: input dims " + dims_to_string(x.dims()) +
                     " incompatible with layer width " + std::to_string(spec.layers.front()));
  Tensor h = x;
  for (std::size_t i = 0; i < n_layers; ++i) {
    const Tensor& w = params.at("w" + std::to_string(i));
    const Tensor& b = params.at("b" + std::to_string(i));
    if (w.rank() != 2 || w.rows() != h.cols())
      throw ShapeError("forward_mlp_value: weight dims " + dims_to_string(w.dims()) +
                       " incompatible with activation dims " + dims_to_string(h.dims()));
    const std::size_t r = h.rows(), m = h.cols(), n = w.cols();
    std::vector<double> out(r * n, 0.0);
    for (std::size_t row = 0; row < r; ++row) {
      for (std::size_t k = 0; k < m; ++k) {
        const double hik = h.at(row, k);
        for (std::size_t j = 0; j < n; ++j) out[row * n + j] += hik * w.at(k, j);
      }
    }
    for (std::size_t row = 0; row < r; ++row)
      for (std::size_t j = 0; j < n; ++j) out[row * n + j] += b[j];
    h = Tensor::matrix(r, n, std::move(out));
    if (i + 1 < n_layers) {
      for (double& v : h.data())
        v = spec.hidden == Activation::Relu ? (v > 0.0 ? v : 0.0) : std::tanh(v);
    }
  }
  return h;
}

}  // namespace metasgd
