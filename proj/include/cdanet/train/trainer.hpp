#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdanet/data/dataset.hpp"
#include "cdanet/model/assembly.hpp"
#include "cdanet/model/losses.hpp"
#include "cdanet/train/optimizer.hpp"

namespace cdanet {

/// What a training run optimizes.
enum class TrainMode {
  translation,    // vanilla + cross-supervision + orthogonality, both domains
  joint,          // vanilla losses of both domains only
  single_domain,  // vanilla loss of the target domain only
  augmentation,   // augmented tower on the target domain
};

std::string_view to_string(TrainMode mode);
TrainMode parse_train_mode(std::string_view text);

struct TrainConfig {
  double alpha = 0.01;
  double beta = 0.1;
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t max_epochs = 200;
  /// Evaluations without a validation AUC improvement before stopping.
  std::size_t patience = 5;
  /// Steps between validations; 0 validates at the end of every epoch.
  std::size_t eval_every = 0;
  std::uint64_t seed = 1;
  ModelConfig model;
  AdamHyper adam;

  void validate() const;
};

struct EvalRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  /// Mean over the steps since the previous evaluation.
  LossBreakdown loss;
  double val_auc = 0.0;
  /// Translation and joint runs also track the source domain.
  std::optional<double> source_val_auc;
  double wall_ms = 0.0;
};

enum class StopReason { early_stop, max_epochs };
std::string_view to_string(StopReason reason);

struct RunRecord {
  TrainMode mode = TrainMode::translation;
  std::vector<EvalRecord> history;
  double best_val_auc = 0.0;
  std::size_t best_step = 0;
  StopReason stop = StopReason::max_epochs;
  double lr = 0.0;
  AdamHyper adam;

  /// One JSON object per evaluation.
  std::string to_jsonl() const;
  /// Best AUC, stop reason and optimizer settings as one JSON object.
  std::string summary_json() const;
};

/// Everything needed to continue a run exactly where it paused.
struct TrainerState {
  ModelAssembly model;
  OptimState optim;
  std::size_t epoch = 0;  // epoch in progress
  std::size_t batch = 0;  // next batch within that epoch
  std::size_t step = 0;
  std::size_t evals_since_best = 0;
  double best_val_auc = -std::numeric_limits<double>::infinity();
  std::size_t best_step = 0;
  /// Parameter values at the best evaluation, in store order.
  std::vector<Tensor> best_params;
  std::vector<EvalRecord> history;
};

struct TrainOptions {
  /// Measure wall time in records; off keeps outputs reproducible byte for byte.
  bool record_wall_time = false;
  /// Called after every evaluation with the state a resumed run starts from.
  std::function<void(const TrainerState&)> on_eval;
  /// Continue from this state instead of the initial model.
  std::optional<TrainerState> resume;
};

struct TrainResult {
  /// Parameters from the best validation evaluation.
  ModelAssembly model;
  RunRecord record;
};

/// Training inputs; only the splits a mode needs are read.
struct StageData {
  const Dataset* source_train = nullptr;
  const Dataset* source_val = nullptr;
  const Dataset* target_train = nullptr;
  const Dataset* target_val = nullptr;
};

/// Minibatch Adam with per-evaluation early stopping on target validation AUC.
TrainResult train_stage(ModelAssembly initial, TrainMode mode, const StageData& data,
                        const TrainConfig& config, TrainOptions options = {});

/// Stage 1 from a fresh model.
TrainResult train_translation(const Splits& source, const Splits& target,
                              const TrainConfig& config, TrainOptions options = {});
/// Both vanilla losses only, the shared-extractor baselines.
TrainResult train_joint(const Splits& source, const Splits& target,
                        const TrainConfig& config, TrainOptions options = {});
/// Target vanilla loss only, the single-domain baseline. The source schema
/// only shapes the unused source side of the model.
TrainResult train_target_only(const Schema& source_schema, const Splits& target,
                              const TrainConfig& config, TrainOptions options = {});

/// Augmentation-stage model carrying the embeddings, extractor and both
/// translators of a translation-stage model, plus a freshly initialized tower.
ModelAssembly transfer_parameters(const ModelAssembly& translation_model, std::uint64_t seed,
                                  Domain augmented = Domain::target);
/// As above with an explicit augmentation-stage config; its latent width must
/// match the translation model's.
ModelAssembly transfer_parameters(const ModelAssembly& translation_model,
                                  const ModelConfig& config, std::uint64_t seed,
                                  Domain augmented = Domain::target);

/// Stage 2; reads target-domain data only.
TrainResult train_augmentation(const Splits& target, ModelAssembly transferred,
                               const TrainConfig& config, TrainOptions options = {});

/// Seeds of the independent random streams of a run.
std::uint64_t init_seed(const TrainConfig& config);
std::uint64_t augmentation_init_seed(const TrainConfig& config);

void save_model(const ModelAssembly& model, const std::filesystem::path& path);
/// Parameters into a copy of `layout`; the fingerprint must match.
ModelAssembly load_model(const std::filesystem::path& path, const ModelAssembly& layout);

void save_trainer_state(const TrainerState& state, const std::filesystem::path& path);
TrainerState load_trainer_state(const std::filesystem::path& path, const ModelAssembly& layout);

}  // namespace cdanet
