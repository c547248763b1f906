#include "cdanet/train/optimizer.hpp"

#include <cmath>

#include "cdanet/error.hpp"

namespace cdanet {

void adam_step(ParameterStore& params, std::span<const std::size_t> selected,
               OptimState& state, double lr) {
  for (std::size_t i : selected) {
    const Parameter& p = params[i];
    if (!p.tensor.has_grad()) {
      throw ContractError("adam_step: parameter " + p.name + " has no gradient");
    }
  }
  ++state.step;
  const AdamHyper& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i : selected) {
    Parameter& p = params[i];
    auto m = state.first_moment.try_emplace(p.name, p.tensor.shape()).first->second.values();
    auto v = state.second_moment.try_emplace(p.name, p.tensor.shape()).first->second.values();
    if (m.size() != p.tensor.size() || v.size() != p.tensor.size()) {
      throw ContractError("adam_step: moment shape differs for " + p.name);
    }
    auto value = p.tensor.values();
    auto grad = p.tensor.grad();
    for (std::size_t k = 0; k < value.size(); ++k) {
      const double g = grad[k];
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g;
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      value[k] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
    p.tensor.zero_grad();
  }
}

}  // namespace cdanet
