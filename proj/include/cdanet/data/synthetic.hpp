#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdanet/data/dataset.hpp"

namespace cdanet {

/// Two-domain click benchmark with known ground truth.
///
/// Users u and items v are standard normal in R^k; a click has probability
/// sigmoid(u.v + label_bias) in either domain. Item j of the target domain has
/// the latent of source item correspondence[j], so a user's preference for an
/// item is preserved across domains. Each domain observes its own fixed random
/// projections of u and of v (with per-entity Gaussian noise), quantized into
/// one-hot buckets, plus the raw projected values as one dense field.
///
/// By default users are observed through fewer feature dimensions than items,
/// so a user's preference is mostly learned from interactions, which both
/// domains share through the overlapped user id.
struct SyntheticConfig {
  std::size_t latent_dim = 8;
  std::size_t n_users = 200;
  std::size_t n_items = 1000;  // per domain
  double overlap_user_fraction = 1.0;
  double feature_noise_sigma = 0.5;
  std::size_t bucket_count = 10;
  double label_bias = 0.0;
  std::size_t n_examples = 25000;  // per domain
  std::size_t user_feature_dim = 2;
  std::size_t item_feature_dim = 8;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Target item id -> source item id.
struct Correspondence {
  std::vector<std::size_t> target_to_source;

  std::size_t operator()(std::size_t target_item) const {
    return target_to_source.at(target_item);
  }
  bool injective() const;
  std::string to_csv() const;
  static Correspondence parse_csv(std::string_view text);
  static Correspondence load(const std::filesystem::path& path);
};

struct SyntheticData {
  Dataset source;
  Dataset target;
  Correspondence correspondence;
  std::vector<std::vector<double>> user_latents;
  std::vector<std::vector<double>> source_item_latents;
  std::vector<std::vector<double>> target_item_latents;
  /// Users eligible per domain.
  std::vector<std::size_t> source_users, target_users;
};

/// Field names used by the generator.
inline constexpr const char* kUserField = "user_id";
inline constexpr const char* kItemField = "item_id";

Schema synthetic_schema(const SyntheticConfig& cfg, const std::string& domain);

/// Pure function of the config (including its seed).
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

/// Bernoulli parameter sigmoid(u.v + bias) of a user/item latent pair.
double click_probability(const std::vector<double>& user,
                         const std::vector<double>& item, double label_bias);

}  // namespace cdanet
