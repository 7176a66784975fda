#include "metasgd/tensor.hpp"

#include <cmath>

namespace metasgd {

std::size_t numel_of(const std::vector<std::size_t>& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) n *= d;
  return n;
}

std::string dims_to_string(const std::vector<std::size_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::zeros(std::vector<std::size_t> dims) {
  std::vector<double> data(numel_of(dims), 0.0);
  return Tensor(std::move(dims), std::move(data));
}

Tensor Tensor::full(std::vector<std::size_t> dims, double v) {
  std::vector<double> data(numel_of(dims), v);
  return Tensor(std::move(dims), std::move(data));
}

Tensor Tensor::vector(std::vector<double> values) {
  std::vector<std::size_t> dims{values.size()};
  return Tensor(std::move(dims), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  if (values.size() != rows * cols)
    throw ShapeError("matrix: " + std::to_string(values.size()) + " values for " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::from_flat(std::vector<std::size_t> dims, std::vector<double> values) {
  if (values.size() != numel_of(dims))
    throw ShapeError("from_flat: " + std::to_string(values.size()) + " values for dims " +
                     dims_to_string(dims));
  return Tensor(std::move(dims), std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows: tensor is not a matrix, dims " + dims_to_string(dims_));
  return dims_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols: tensor is not a matrix, dims " + dims_to_string(dims_));
  return dims_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

double Tensor::item() const {
  if (data_.size() != 1)
    throw ShapeError("item: tensor has " + std::to_string(data_.size()) + " elements");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_dims) const {
  if (numel_of(new_dims) != data_.size())
    throw ShapeError("reshape: " + dims_to_string(dims_) + " to " + dims_to_string(new_dims));
  return Tensor(std::move(new_dims), data_);
}

}  // namespace metasgd
