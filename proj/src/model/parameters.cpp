#include "cdanet/model/parameters.hpp"

#include <cmath>

#include "cdanet/data/random.hpp"
#include "cdanet/error.hpp"

namespace cdanet {

std::size_t ParameterStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
  value.requires_grad = true;
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::optional<std::size_t> ParameterStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter* ParameterStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &params_[it->second];
}

Tensor& ParameterStore::at(std::string_view name) {
  Parameter* p = find(name);
  if (!p) throw ContractError("unknown parameter " + std::string(name));
  return p->tensor;
}

const Tensor& ParameterStore::at(std::string_view name) const {
  const Parameter* p = find(name);
  if (!p) throw ContractError("unknown parameter " + std::string(name));
  return p->tensor;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p.tensor.zero_grad();
}

Tensor uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = scale * (2.0 * rng.uniform() - 1.0);
  return t;
}

Tensor glorot_uniform(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_matrix(rng, fan_in, fan_out, limit);
}

}  // namespace cdanet
