#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdanet/data/dataset.hpp"
#include "cdanet/data/synthetic.hpp"
#include "cdanet/eval/experiments.hpp"
#include "cdanet/eval/neighbors.hpp"

namespace cdanet {

struct CsvSource {
  std::filesystem::path source_data, source_schema;
  std::filesystem::path target_data, target_schema;
  std::optional<std::filesystem::path> correspondence;
  /// Ratings above this become positive labels; unset reads 0/1 labels.
  std::optional<double> label_threshold;
};

struct DataSection {
  /// Exactly one of the two is set. The generator seed is derived from the
  /// run seed, so `synthetic.seed` is ignored.
  std::optional<SyntheticConfig> synthetic;
  std::optional<CsvSource> csv;
  double train_ratio = 0.8;
  double val_ratio = 0.1;
  double test_ratio = 0.1;
};

struct EvalSection {
  NeighborOptions neighbors;
  std::vector<Variant> variants = AblationPlan{}.variants;
  /// Baselines reported next to the ablation variants.
  std::vector<Baseline> baselines;
  std::vector<double> ratios{0.2, 0.4, 0.6, 0.8, 1.0};
  bool sparsity_mlp = true;
  std::vector<double> alphas{0.0, 0.001, 0.01, 0.1, 1.0};
  std::vector<double> betas{0.0, 0.01, 0.1, 1.0};
};

/// Everything a command needs, read from flat sectioned key=value text:
///
///   seed = 1
///   [train]
///   alpha = 0.01
///
/// Top-level keys come before the first section. `#` starts a comment.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  /// Seeds of ablation and sweep cells.
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::filesystem::path output_dir = "runs";
  DataSection data;
  /// Training settings; the run seed is applied by pipeline_for.
  PipelineConfig pipeline;
  EvalSection eval;

  /// `origin` names the text in errors; relative paths resolve against `base_dir`.
  static ExperimentConfig parse(std::string_view text, const std::string& origin = "<config>",
                                const std::filesystem::path& base_dir = ".");
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Every key with its effective value; parsing it yields the same config.
  std::string dump() const;
  PipelineConfig pipeline_for(std::uint64_t run_seed) const;
  /// Semantic checks across keys. Throws ConfigError naming the key path.
  void validate() const;
};

/// Both domains as loaded or generated for `seed`, split chronologically.
BenchmarkData load_benchmark(const DataSection& data, std::uint64_t seed);
/// Unsplit datasets, for generation and neighbor analysis.
struct RawBenchmark {
  Dataset source, target;
  std::optional<Correspondence> correspondence;
};
RawBenchmark load_raw(const DataSection& data, std::uint64_t seed);

}  // namespace cdanet
