#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdanet/autodiff/tape.hpp"
#include "cdanet/data/dataset.hpp"
#include "cdanet/model/layers.hpp"
#include "cdanet/model/parameters.hpp"

namespace cdanet {

enum class Domain { source = 0, target = 1 };

inline Domain opposite(Domain d) {
  return d == Domain::source ? Domain::target : Domain::source;
}
std::string_view to_string(Domain d);

enum class ExtractorKind { indep_mlp, shared_mlp, mmoe, ple };

std::string_view to_string(ExtractorKind kind);
ExtractorKind parse_extractor_kind(std::string_view text);

struct ExtractorConfig {
  ExtractorKind kind = ExtractorKind::mmoe;
  /// Hidden widths of every MLP, private or shared; the latent width follows.
  std::vector<std::size_t> hidden = {256};
  /// Shared experts (mmoe, ple).
  std::size_t n_experts = 2;
  /// Private experts per domain (ple).
  std::size_t n_private_experts = 1;
  /// Width of a per-domain Linear+ReLU in front of shared components. Zero
  /// feeds embeddings directly, which requires equal embedding widths.
  std::size_t adapter_width = 0;
};

struct ModelConfig {
  ExtractorConfig extractor;
  std::size_t latent_dim = 128;
  std::size_t emb_dim = 64;
  /// Hidden widths of the prediction towers; the logit layer follows.
  std::vector<std::size_t> tower_hidden = {64};

  void validate() const;
  /// Canonical text form, stable across runs; feeds the fingerprint.
  std::string describe() const;
};

enum class Stage { translation, augmentation };
std::string_view to_string(Stage stage);

/// Both domains' embeddings, extractors, translators and towers.
///
/// A translation-stage assembly owns one prediction tower per domain; an
/// augmentation-stage assembly instead owns a tower over [z, translated z] for
/// the augmented domain. Parameters live in a single store, so copies are
/// independent.
class ModelAssembly {
 public:
  /// Empty placeholder; use create or create_augmentation.
  ModelAssembly() = default;

  /// Translation-stage model with freshly initialized parameters.
  static ModelAssembly create(const Schema& source, const Schema& target,
                              const ModelConfig& config, std::uint64_t seed);
  /// Augmentation-stage model with freshly initialized parameters.
  static ModelAssembly create_augmentation(const Schema& source, const Schema& target,
                                           const ModelConfig& config,
                                           std::uint64_t seed,
                                           Domain augmented = Domain::target);

  const ModelConfig& config() const { return config_; }
  const Schema& schema(Domain d) const { return domain(d).schema; }
  Stage stage() const { return stage_; }
  Domain augmented_domain() const { return augmented_; }
  std::size_t latent_dim() const { return config_.latent_dim; }
  std::size_t embedding_width(Domain d) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Hash of schemas, config, stage and parameter layout.
  std::uint64_t fingerprint() const;

  /// Per-field lookups concatenated in schema order: [n x embedding_width].
  Var embed(Tape& tape, Domain d, const Dataset& data,
            std::span<const std::size_t> rows) const;
  /// Latent features [n x d].
  Var extract(Tape& tape, Domain d, Var embedded) const;
  /// The translator matrix W of a domain.
  Var translator(Tape& tape, Domain d) const;
  /// z W^T, i.e. W z per row.
  Var translate(Tape& tape, Domain d, Var z) const;
  /// Stage-1 tower of the domain: [n x 1] logits.
  Var tower_logit(Tape& tape, Domain d, Var z) const;
  /// Stage-2 tower over the augmented feature: [n x 1] logits.
  Var augmented_logit(Tape& tape, Var augmented) const;
  /// [z, W z] for the augmented domain, or [z, 0] when the translated half
  /// is masked.
  Var augmented_features(Tape& tape, Var z) const;

  /// Ablation hook: replace the translated half of the augmented feature by
  /// zeros, which leaves a plain target model with a wider tower.
  void set_mask_translated(bool mask) { mask_translated_ = mask; }
  bool mask_translated() const { return mask_translated_; }

  /// Embed then extract.
  Var latent(Tape& tape, Domain d, const Dataset& data,
             std::span<const std::size_t> rows) const;

 private:
  struct FieldEmbedding {
    std::size_t table = 0;  // dense fields: projection weight
    std::optional<std::size_t> bias;
  };
  struct DomainNet {
    Schema schema;
    std::vector<FieldEmbedding> fields;
    std::optional<Linear> adapter;
    std::optional<Mlp> private_mlp;
    std::vector<Mlp> private_experts;
    std::optional<Linear> gate;
    std::size_t translator = 0;
    std::optional<Mlp> tower;
  };

  static ModelAssembly build(const Schema& source, const Schema& target,
                             const ModelConfig& config, std::uint64_t seed);

  DomainNet& domain(Domain d) { return domains_[static_cast<int>(d)]; }
  const DomainNet& domain(Domain d) const { return domains_[static_cast<int>(d)]; }

  ModelConfig config_;
  Stage stage_ = Stage::translation;
  Domain augmented_ = Domain::target;
  bool mask_translated_ = false;
  ParameterStore params_;
  std::array<DomainNet, 2> domains_;
  std::optional<Mlp> shared_mlp_;
  std::vector<Mlp> shared_experts_;
  std::optional<Mlp> augmented_tower_;
};

/// Concatenation [z, translated]: original columns first.
Var augment(Var z, Var translated);

/// Logits of a stage's prediction path over all rows of the data, in chunks,
/// without recording gradients.
std::vector<double> predict_logits(const ModelAssembly& model, Domain d, const Dataset& data,
                                   Stage path, std::size_t chunk = 4096);
/// Click probabilities: sigmoid of predict_logits.
std::vector<double> predict(const ModelAssembly& model, Domain d, const Dataset& data,
                            Stage path, std::size_t chunk = 4096);

}  // namespace cdanet
