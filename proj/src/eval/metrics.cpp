#include "cdanet/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cdanet/error.hpp"

namespace cdanet {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("auc: " + std::to_string(scores.size()) + " scores but " +
                          std::to_string(labels.size()) + " labels");
  }
  std::size_t positives = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw ValidationError("auc: label " + std::to_string(labels[i]) + " at index " +
                            std::to_string(i) + " is not 0 or 1");
    }
    if (std::isnan(scores[i])) throw ValidationError("auc: NaN score at index " + std::to_string(i));
    positives += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw ValidationError("auc undefined: need at least one positive and one negative, got " +
                          std::to_string(positives) + " and " + std::to_string(negatives));
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are 1-based; a tie group spanning ranks [lo, hi] gets (lo + hi) / 2.
  double positive_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) positive_rank_sum += rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

double auc(const ScoredSet& set) { return auc(set.scores, set.labels); }

double mean_logloss(std::span<const double> logits, std::span<const int> labels) {
  if (logits.size() != labels.size() || logits.empty()) {
    throw ValidationError("logloss needs equal, non-zero numbers of logits and labels");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double l = logits[i];
    total += std::max(l, 0.0) - l * labels[i] + std::log1p(std::exp(-std::abs(l)));
  }
  return total / static_cast<double>(logits.size());
}

std::vector<int> labels_of(const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& e : data.examples()) out.push_back(e.label);
  return out;
}

EvalMetrics evaluate(const ModelAssembly& model, const Dataset& split, Stage path,
                     Domain domain) {
  const std::vector<double> logits = predict_logits(model, domain, split, path);
  const std::vector<int> labels = labels_of(split);
  return {auc(logits, labels), mean_logloss(logits, labels), split.size()};
}

}  // namespace cdanet
