#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "cdanet/data/dataset.hpp"
#include "cdanet/data/random.hpp"
#include "cdanet/model/assembly.hpp"
#include "doctest.h"

namespace cdanet::testing {

inline Schema source_schema() {
  return Schema::parse("src", "user,id,6,1\nitem,id,5,0\ntags,multi_hot,4,0\nvec,dense,2,0\n");
}

inline Schema target_schema() {
  return Schema::parse("tgt", "user,id,6,1\nitem,id,7,0\nctx,one_hot,3,0\nvec,dense,2,0\n");
}

inline Dataset random_dataset(const Schema& schema, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> examples;
  for (std::size_t i = 0; i < n; ++i) {
    Example ex;
    ex.label = static_cast<int>(i % 2);
    ex.timestamp = static_cast<std::int64_t>(i);
    for (const auto& f : schema.fields()) {
      switch (f.kind) {
        case FieldKind::id:
        case FieldKind::one_hot:
          ex.values.emplace_back(static_cast<std::size_t>(rng.below(f.vocab_size)));
          break;
        case FieldKind::multi_hot: {
          std::vector<std::size_t> bag{static_cast<std::size_t>(rng.below(f.vocab_size))};
          if (rng.bernoulli(0.5)) bag.push_back(static_cast<std::size_t>(rng.below(f.vocab_size)));
          ex.values.emplace_back(bag);
          break;
        }
        case FieldKind::dense: {
          std::vector<double> v(f.dense_dim);
          for (double& x : v) x = rng.normal();
          ex.values.emplace_back(v);
          break;
        }
      }
    }
    examples.push_back(std::move(ex));
  }
  return Dataset(schema, std::move(examples));
}

inline ModelConfig tiny_config(ExtractorKind kind) {
  ModelConfig cfg;
  cfg.extractor.kind = kind;
  cfg.extractor.hidden = {5};
  cfg.extractor.n_experts = 2;
  cfg.latent_dim = 3;
  cfg.emb_dim = 2;
  cfg.tower_hidden = {4};
  return cfg;
}

inline void set_values(Tensor& dst, const Tensor& src) {
  REQUIRE(dst.shape() == src.shape());
  std::copy(src.values().begin(), src.values().end(), dst.values().begin());
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace cdanet::testing
