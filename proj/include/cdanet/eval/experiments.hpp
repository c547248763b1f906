#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdanet/data/dataset.hpp"
#include "cdanet/data/synthetic.hpp"
#include "cdanet/eval/metrics.hpp"
#include "cdanet/train/trainer.hpp"

namespace cdanet {

/// Both domains split chronologically, plus the item correspondence when the
/// data is synthetic.
struct BenchmarkData {
  Splits source;
  Splits target;
  std::optional<Correspondence> correspondence;
};

/// Data for one seed of a multi-seed experiment.
using DataProvider = std::function<BenchmarkData(std::uint64_t seed)>;

/// Generator seed of the synthetic data used by a run with this seed.
std::uint64_t generator_seed(std::uint64_t run_seed);

/// Synthetic data whose generator seed is derived from the experiment seed.
DataProvider synthetic_provider(SyntheticConfig config);
/// The same data for every seed.
DataProvider fixed_provider(BenchmarkData data);

/// Augmentation-stage settings that differ from the translation stage.
struct AugmentationOverrides {
  std::optional<double> lr;
  std::optional<std::size_t> eval_every;
  std::optional<std::size_t> patience;
  std::optional<std::size_t> max_epochs;
};

struct PipelineConfig {
  TrainConfig train;
  AugmentationOverrides augmentation;

  TrainConfig augmentation_config() const;
  void validate() const;
};

struct PipelineResult {
  TrainResult translation;
  TrainResult augmentation;
};

/// Translation stage, parameter transfer, augmentation stage.
PipelineResult run_pipeline(const BenchmarkData& data, const PipelineConfig& config);

enum class Variant { full, wo_orth, wo_cross, wo_translation_network, wo_augmentation_network };
std::string_view to_string(Variant v);
Variant parse_variant(std::string_view text);

/// Target test metrics of one ablation variant.
EvalMetrics run_variant(Variant variant, const BenchmarkData& data, const PipelineConfig& config);

enum class Baseline { mlp, share_bottom, mmoe, ple };
std::string_view to_string(Baseline b);
Baseline parse_baseline(std::string_view text);

/// Target test metrics of a baseline: the MLP trains on the target domain
/// alone, the others train both vanilla losses through a shared extractor.
EvalMetrics run_baseline(Baseline baseline, const BenchmarkData& data,
                         const PipelineConfig& config);

struct CellResult {
  std::string cell;
  std::uint64_t seed = 0;
  EvalMetrics test;
  double wall_ms = 0.0;
};

struct CellSummary {
  std::string cell;
  double mean_auc = 0.0;
  double mean_logloss = 0.0;
  std::size_t seeds = 0;
};

/// Means per cell, in first-appearance order.
std::vector<CellSummary> summarize(const std::vector<CellResult>& cells);

/// Header `variant_or_cell,seed,auc,logloss,wall_ms`, values at full precision.
std::string metrics_csv(const std::vector<CellResult>& cells);
std::string summary_csv(const std::vector<CellSummary>& summary);

struct ExperimentOptions {
  /// Worker threads across cells; results do not depend on it.
  std::size_t parallel = 1;
  bool record_wall_time = false;
};

struct AblationPlan {
  std::vector<Variant> variants{Variant::full, Variant::wo_orth, Variant::wo_cross,
                                Variant::wo_translation_network,
                                Variant::wo_augmentation_network};
  /// Throws ConfigError unless `full` is present and variants are distinct.
  void validate() const;
};

/// One cell per (variant, seed), seeds outermost.
std::vector<CellResult> run_ablations(const AblationPlan& plan, const DataProvider& data,
                                      const PipelineConfig& config,
                                      const std::vector<std::uint64_t>& seeds,
                                      const ExperimentOptions& options = {});

/// One cell per (baseline, seed), seeds outermost.
std::vector<CellResult> run_baselines(const std::vector<Baseline>& baselines,
                                      const DataProvider& data, const PipelineConfig& config,
                                      const std::vector<std::uint64_t>& seeds,
                                      const ExperimentOptions& options = {});

/// Cells `cdanet@<ratio>` and, when requested, `mlp@<ratio>` per seed. Both
/// domains' training splits are subsampled; validation and test stay fixed.
std::vector<CellResult> sweep_sparsity(const std::vector<double>& ratios, const DataProvider& data,
                                       const PipelineConfig& config,
                                       const std::vector<std::uint64_t>& seeds,
                                       bool with_mlp = true, const ExperimentOptions& options = {});

/// Cells `alpha=<a>;beta=<b>` of full pipeline runs, one per grid point and seed.
std::vector<CellResult> sweep_hyper(const std::vector<double>& alphas,
                                    const std::vector<double>& betas, const DataProvider& data,
                                    const PipelineConfig& config,
                                    const std::vector<std::uint64_t>& seeds,
                                    const ExperimentOptions& options = {});

/// Shortest text that parses back to the same double.
std::string format_number(double value);

}  // namespace cdanet
