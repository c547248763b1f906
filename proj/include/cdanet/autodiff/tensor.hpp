#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cdanet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major fp64 array with an optional gradient buffer of the same shape.
///
/// Rank-0 tensors (empty shape) are scalars. Most operations view a tensor as a
/// matrix: rank 2 is [rows x cols], rank 1 is a column [n x 1], rank 0 is [1 x 1].
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double item() const;

  bool has_grad() const { return has_grad_; }
  std::span<double> grad() { return grad_; }
  std::span<const double> grad() const { return grad_; }
  /// Allocates a zero gradient if none exists; keeps an existing one.
  void ensure_grad() const;
  /// Gradient storage written by Tape::backward. The gradient is accumulator
  /// state rather than part of the value, so it is reachable from const.
  std::span<double> grad_accumulator() const;
  void zero_grad();
  void drop_grad();

  bool requires_grad = false;

 private:
  Shape shape_;
  std::vector<double> values_;
  mutable std::vector<double> grad_;
  mutable bool has_grad_ = false;
};

/// Bitwise equality of shape and values (gradients ignored).
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace cdanet
