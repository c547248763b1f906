#include "cdanet/autodiff/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <numeric>

#include "cdanet/error.hpp"

namespace cdanet {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_size(shape_)) {
    throw DimensionError("tensor of shape " + shape_to_string(shape_) +
                         " cannot hold " + std::to_string(values_.size()) +
                         " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) return 1;
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() < 2) return 1;
  return shape_[1];
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_to_string(shape_));
  }
  return values_[0];
}

void Tensor::ensure_grad() const {
  if (!has_grad_) {
    grad_.assign(values_.size(), 0.0);
    has_grad_ = true;
  }
}

std::span<double> Tensor::grad_accumulator() const {
  ensure_grad();
  return grad_;
}

void Tensor::zero_grad() {
  grad_.assign(values_.size(), 0.0);
  has_grad_ = true;
}

void Tensor::drop_grad() {
  grad_.clear();
  has_grad_ = false;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.values().data(), b.values().data(),
                     a.size() * sizeof(double)) == 0;
}

}  // namespace cdanet
