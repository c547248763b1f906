#include "cdanet/model/layers.hpp"

#include "cdanet/data/random.hpp"
#include "cdanet/error.hpp"

namespace cdanet {

Linear make_linear(ParameterStore& store, std::uint64_t seed,
                   const std::string& name, std::size_t in, std::size_t out) {
  Rng rng(derive_seed(seed, name));
  Linear layer;
  layer.weight = store.add(name + ".weight", glorot_uniform(rng, in, out));
  layer.bias = store.add(name + ".bias", Tensor({out}));
  return layer;
}

Var apply(Tape& tape, const ParameterStore& store, const Linear& layer, Var x) {
  return ad::add_bias(ad::matmul(x, tape.leaf(store.tensor(layer.weight))),
                      tape.leaf(store.tensor(layer.bias)));
}

std::size_t Mlp::in_width(const ParameterStore& store) const {
  return store.tensor(layers.front().weight).rows();
}

std::size_t Mlp::out_width(const ParameterStore& store) const {
  return store.tensor(layers.back().weight).cols();
}

Mlp make_mlp(ParameterStore& store, std::uint64_t seed, const std::string& name,
             std::span<const std::size_t> widths, bool relu_output) {
  if (widths.size() < 2) throw ContractError("mlp " + name + " needs at least one layer");
  Mlp mlp;
  mlp.relu_output = relu_output;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    mlp.layers.push_back(make_linear(store, seed, name + "." + std::to_string(l),
                                     widths[l], widths[l + 1]));
  }
  return mlp;
}

Var apply(Tape& tape, const ParameterStore& store, const Mlp& mlp, Var x) {
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    x = apply(tape, store, mlp.layers[l], x);
    if (l + 1 < mlp.layers.size() || mlp.relu_output) x = ad::relu(x);
  }
  return x;
}

}  // namespace cdanet
