#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdanet/data/dataset.hpp"
#include "cdanet/data/synthetic.hpp"
#include "cdanet/model/assembly.hpp"

namespace cdanet {

enum class NeighborMetric { cosine, euclidean };
std::string_view to_string(NeighborMetric metric);
NeighborMetric parse_neighbor_metric(std::string_view text);

struct Neighbor {
  std::size_t id = 0;  // row of the candidate in the source data
  std::size_t item = 0;
  double distance = 0.0;
  bool hit = false;
};

struct NeighborQuery {
  std::size_t id = 0;  // row of the query in the target data
  std::size_t item = 0;
  std::vector<double> translated;
  std::vector<Neighbor> neighbors;  // ascending distance
  /// Probability that k uniformly drawn candidates contain a match.
  double chance = 0.0;
  bool hit = false;
};

struct NeighborReport {
  std::size_t k = 0;
  NeighborMetric metric = NeighborMetric::cosine;
  std::size_t candidates = 0;
  std::vector<NeighborQuery> queries;
  /// Queries whose corresponding item has no candidate; not scored.
  std::size_t skipped = 0;
  /// Hit statistics, present when a correspondence was supplied.
  std::optional<double> hit_rate;
  std::optional<double> chance_rate;
  /// Standard error of the hit rate if retrieval were uniformly random.
  std::optional<double> chance_std_error;

  /// One JSON object per query.
  std::string to_jsonl() const;
  std::string summary_json() const;
};

struct NeighborOptions {
  std::size_t k = 5;
  NeighborMetric metric = NeighborMetric::cosine;
  std::string item_field = kItemField;
  /// Cap on the number of queries, taken in data order; 0 keeps all.
  std::size_t max_queries = 0;
};

/// For each positive target example, translate its latent into the source
/// latent space and retrieve the k nearest positive source latents. With a
/// correspondence, a neighbor is a hit when its item is the counterpart of the
/// query's item.
NeighborReport knn_translation_analysis(const ModelAssembly& model, const Dataset& source,
                                        const Dataset& target,
                                        const std::optional<Correspondence>& correspondence,
                                        const NeighborOptions& options = {});

/// P(at least one of `matches` marked candidates among k drawn without
/// replacement from `candidates`).
double hypergeometric_hit_chance(std::size_t candidates, std::size_t matches, std::size_t k);

}  // namespace cdanet
