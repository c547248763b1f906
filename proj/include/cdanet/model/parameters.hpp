#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdanet/autodiff/tensor.hpp"

namespace cdanet {

class Rng;

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Named parameters of one model. Components hold indices into the store, so
/// copying a store (or the assembly owning it) is a deep copy.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Tensor& tensor(std::size_t i) { return params_[i].tensor; }
  const Tensor& tensor(std::size_t i) const { return params_[i].tensor; }

  std::optional<std::size_t> index_of(std::string_view name) const;
  const Parameter* find(std::string_view name) const;
  Parameter* find(std::string_view name);
  /// Throws ContractError for unknown names.
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const;
  void zero_grads();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out);
/// Uniform in +-scale.
Tensor uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale);

}  // namespace cdanet
