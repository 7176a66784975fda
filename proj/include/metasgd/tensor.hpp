#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace metasgd {

/// Thrown when operand shapes do not conform.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation leaves the finite-float domain (NaN/Inf, log of
/// a non-positive value, diverging training loss).
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown on file-format or filesystem failures.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Dense n-dimensional array of doubles in row-major order.
/// Rank 0 is a scalar (one element), rank 1 a vector, rank 2 a matrix.
class Tensor {
public:
  Tensor() : data_(1, 0.0) {}

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> dims);
  static Tensor full(std::vector<std::size_t> dims, double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor from_flat(std::vector<std::size_t> dims, std::vector<double> values);

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  /// Value of a single-element tensor.
  double item() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

  Tensor reshaped(std::vector<std::size_t> new_dims) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

private:
  Tensor(std::vector<std::size_t> dims, std::vector<double> data)
      : dims_(std::move(dims)), data_(std::move(data)) {}

  std::vector<std::size_t> dims_;  // empty = scalar
  std::vector<double> data_;
};

std::string dims_to_string(const std::vector<std::size_t>& dims);
std::size_t numel_of(const std::vector<std::size_t>& dims);

}  // namespace metasgd
