#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdanet/data/dataset.hpp"
#include "cdanet/model/assembly.hpp"

namespace cdanet {

/// Scores (any monotone scale) with binary labels.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;
};

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Rank-sum with average ranks, O(n log n).
/// Throws ValidationError when either class is absent.
double auc(std::span<const double> scores, std::span<const int> labels);
double auc(const ScoredSet& set);

/// Mean binary cross entropy of sigmoid(logits).
double mean_logloss(std::span<const double> logits, std::span<const int> labels);

struct EvalMetrics {
  double auc = 0.0;
  double logloss = 0.0;
  std::size_t n = 0;
};

/// Full pass over a split through the chosen prediction path.
EvalMetrics evaluate(const ModelAssembly& model, const Dataset& split, Stage path,
                     Domain domain = Domain::target);

std::vector<int> labels_of(const Dataset& data);

}  // namespace cdanet
