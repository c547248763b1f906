#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "cdanet/autodiff/tensor.hpp"
#include "cdanet/model/parameters.hpp"

namespace cdanet {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments keyed by parameter name.
struct OptimState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// One bias-corrected Adam update of the selected parameters, then their
/// gradients are zeroed. A selected parameter without a gradient buffer is a
/// contract error.
void adam_step(ParameterStore& params, std::span<const std::size_t> selected,
               OptimState& state, double lr);

}  // namespace cdanet
