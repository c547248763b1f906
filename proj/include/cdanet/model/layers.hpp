#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cdanet/autodiff/tape.hpp"
#include "cdanet/model/parameters.hpp"

namespace cdanet {

/// Affine map x W + b; indices refer to a ParameterStore.
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

/// Parameters `<name>.weight` [in x out] (Glorot) and `<name>.bias` (zeros).
Linear make_linear(ParameterStore& store, std::uint64_t seed,
                   const std::string& name, std::size_t in, std::size_t out);
Var apply(Tape& tape, const ParameterStore& store, const Linear& layer, Var x);

struct Mlp {
  std::vector<Linear> layers;
  /// ReLU after the last layer too (hidden layers always get one).
  bool relu_output = false;

  std::size_t in_width(const ParameterStore& store) const;
  std::size_t out_width(const ParameterStore& store) const;
};

/// widths = {in, h1, ..., out}; layer l is named `<name>.<l>`.
Mlp make_mlp(ParameterStore& store, std::uint64_t seed, const std::string& name,
             std::span<const std::size_t> widths, bool relu_output);
Var apply(Tape& tape, const ParameterStore& store, const Mlp& mlp, Var x);

}  // namespace cdanet
