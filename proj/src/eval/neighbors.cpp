#include "cdanet/eval/neighbors.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "cdanet/error.hpp"
#include "json.hpp"

namespace cdanet {
namespace {

using Json = nlohmann::ordered_json;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<std::size_t> positive_rows(const Dataset& data) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data[i].label == 1) rows.push_back(i);
  return rows;
}

std::size_t item_of(const Example& ex, std::size_t field) {
  const auto* id = std::get_if<std::size_t>(&ex.values[field]);
  if (!id) throw DataError("neighbor analysis needs a categorical item field");
  return *id;
}

std::size_t field_index(const Dataset& data, const std::string& name) {
  auto idx = data.schema().index_of(name);
  if (!idx) {
    throw DataError("schema '" + data.schema().domain_name() + "' has no field '" + name + "'");
  }
  return *idx;
}

/// Latents of the given rows, optionally translated, one per matrix row.
Matrix latents(const ModelAssembly& model, Domain d, const Dataset& data,
               const std::vector<std::size_t>& rows, bool translate) {
  const std::size_t width = model.latent_dim();
  Matrix out(rows.size(), width);
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < rows.size(); start += kChunk) {
    const std::size_t end = std::min(rows.size(), start + kChunk);
    std::vector<std::size_t> chunk(rows.begin() + start, rows.begin() + end);
    Tape tape(false);
    Var z = model.latent(tape, d, data, chunk);
    if (translate) z = model.translate(tape, d, z);
    const auto v = z.value().values();
    std::copy(v.begin(), v.end(), out.data() + start * width);
  }
  return out;
}

void normalize_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double n = m.row(r).norm();
    if (n > 0.0) m.row(r) /= n;
  }
}

}  // namespace

std::string_view to_string(NeighborMetric metric) {
  return metric == NeighborMetric::cosine ? "cosine" : "euclidean";
}

NeighborMetric parse_neighbor_metric(std::string_view text) {
  if (text == "cosine") return NeighborMetric::cosine;
  if (text == "euclidean") return NeighborMetric::euclidean;
  throw ConfigError("unknown neighbor metric '" + std::string(text) +
                    "' (expected cosine or euclidean)");
}

double hypergeometric_hit_chance(std::size_t candidates, std::size_t matches, std::size_t k) {
  if (k > candidates) throw ValidationError("k exceeds the candidate count");
  double miss = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (candidates - i <= matches) return 1.0;
    miss *= static_cast<double>(candidates - matches - i) / static_cast<double>(candidates - i);
  }
  return 1.0 - miss;
}

NeighborReport knn_translation_analysis(const ModelAssembly& model, const Dataset& source,
                                        const Dataset& target,
                                        const std::optional<Correspondence>& correspondence,
                                        const NeighborOptions& options) {
  if (options.k < 1) throw ValidationError("k must be >= 1");
  const std::vector<std::size_t> cand_rows = positive_rows(source);
  std::vector<std::size_t> query_rows = positive_rows(target);
  if (options.max_queries > 0 && query_rows.size() > options.max_queries) {
    query_rows.resize(options.max_queries);
  }
  if (options.k > cand_rows.size()) {
    throw ValidationError("k = " + std::to_string(options.k) + " exceeds the " +
                          std::to_string(cand_rows.size()) + " positive source candidates");
  }
  const std::size_t src_item = field_index(source, options.item_field);
  const std::size_t tgt_item = field_index(target, options.item_field);

  NeighborReport report;
  report.k = options.k;
  report.metric = options.metric;
  report.candidates = cand_rows.size();

  std::vector<std::size_t> cand_items(cand_rows.size());
  std::unordered_map<std::size_t, std::size_t> item_counts;
  for (std::size_t i = 0; i < cand_rows.size(); ++i) {
    cand_items[i] = item_of(source[cand_rows[i]], src_item);
    ++item_counts[cand_items[i]];
  }

  Matrix cands = latents(model, Domain::source, source, cand_rows, false);
  const Matrix translated = latents(model, Domain::target, target, query_rows, true);
  Matrix queries = translated;
  Eigen::VectorXd cand_sq;
  if (options.metric == NeighborMetric::cosine) {
    normalize_rows(cands);
    normalize_rows(queries);
  } else {
    cand_sq = cands.rowwise().squaredNorm();
  }

  double hits = 0.0;
  double chance_sum = 0.0;
  double chance_var = 0.0;
  std::vector<std::size_t> order(cand_rows.size());
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index start = 0; start < queries.rows(); start += kBlock) {
    const Eigen::Index n = std::min<Eigen::Index>(kBlock, queries.rows() - start);
    const Matrix dots = queries.middleRows(start, n) * cands.transpose();
    for (Eigen::Index q = 0; q < n; ++q) {
      const std::size_t qi = static_cast<std::size_t>(start + q);
      std::vector<double> dist(cand_rows.size());
      if (options.metric == NeighborMetric::cosine) {
        for (std::size_t c = 0; c < dist.size(); ++c) dist[c] = 1.0 - dots(q, c);
      } else {
        const double qsq = queries.row(start + q).squaredNorm();
        for (std::size_t c = 0; c < dist.size(); ++c) {
          dist[c] = std::sqrt(std::max(0.0, qsq + cand_sq(c) - 2.0 * dots(q, c)));
        }
      }
      std::iota(order.begin(), order.end(), std::size_t{0});
      auto closer = [&](std::size_t a, std::size_t b) {
        return dist[a] != dist[b] ? dist[a] < dist[b] : a < b;
      };
      std::partial_sort(order.begin(), order.begin() + options.k, order.end(), closer);

      NeighborQuery rec;
      rec.id = query_rows[qi];
      rec.item = item_of(target[rec.id], tgt_item);
      rec.translated.assign(translated.row(start + q).data(),
                            translated.row(start + q).data() + translated.cols());
      std::optional<std::size_t> counterpart;
      if (correspondence) counterpart = (*correspondence)(rec.item);
      for (std::size_t j = 0; j < options.k; ++j) {
        const std::size_t c = order[j];
        Neighbor nb{cand_rows[c], cand_items[c], dist[c], counterpart && cand_items[c] == *counterpart};
        rec.hit = rec.hit || nb.hit;
        rec.neighbors.push_back(nb);
      }
      if (counterpart) {
        auto it = item_counts.find(*counterpart);
        if (it == item_counts.end()) {
          ++report.skipped;
          continue;
        }
        rec.chance = hypergeometric_hit_chance(cand_rows.size(), it->second, options.k);
        hits += rec.hit ? 1.0 : 0.0;
        chance_sum += rec.chance;
        chance_var += rec.chance * (1.0 - rec.chance);
      }
      report.queries.push_back(std::move(rec));
    }
  }
  if (correspondence && !report.queries.empty()) {
    const double q = static_cast<double>(report.queries.size());
    report.hit_rate = hits / q;
    report.chance_rate = chance_sum / q;
    report.chance_std_error = std::sqrt(chance_var) / q;
  }
  return report;
}

std::string NeighborReport::to_jsonl() const {
  std::string out;
  for (const auto& q : queries) {
    Json nbs = Json::array();
    for (const auto& nb : q.neighbors) {
      Json j{{"id", nb.id}, {"item", nb.item}, {"distance", nb.distance}};
      if (hit_rate) j["hit"] = nb.hit;
      nbs.push_back(std::move(j));
    }
    Json j{{"query", q.id}, {"item", q.item}, {"translated", q.translated}, {"neighbors", nbs}};
    if (hit_rate) {
      j["hit"] = q.hit;
      j["chance"] = q.chance;
    }
    out += j.dump() + "\n";
  }
  return out;
}

std::string NeighborReport::summary_json() const {
  Json j{{"k", k},
         {"metric", to_string(metric)},
         {"candidates", candidates},
         {"queries", queries.size()},
         {"skipped", skipped}};
  if (hit_rate) {
    j["hit_rate"] = *hit_rate;
    j["chance_rate"] = *chance_rate;
    j["chance_std_error"] = *chance_std_error;
  }
  return j.dump() + "\n";
}

}  // namespace cdanet
