#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cdanet/autodiff/tape.hpp"
#include "cdanet/data/dataset.hpp"
#include "cdanet/model/assembly.hpp"

namespace cdanet {

/// Rows of one domain's dataset forming a minibatch.
struct Batch {
  const Dataset* data = nullptr;
  std::span<const std::size_t> rows;

  std::vector<double> labels() const;
};

/// Loss values of one batch. Stage-1 objectives fill vani/cross/orth, stage-2
/// objectives fill aug/orth; unused components stay 0.
struct LossBreakdown {
  double vani_s = 0.0;
  double vani_t = 0.0;
  double cross_s = 0.0;
  double cross_t = 0.0;
  double orth = 0.0;
  double aug = 0.0;
  double total = 0.0;
};

/// vani_s + vani_t + alpha (cross_s + cross_t) + beta orth.
double weighted_translation_total(const LossBreakdown& parts, double alpha, double beta);

struct Objective {
  Var total;
  LossBreakdown parts;
};

/// BCE of the domain's own tower on its latents.
Var loss_vanilla(Tape& tape, const ModelAssembly& model, Domain d, Var z,
                 std::span<const double> labels);
/// BCE of the opposite domain's tower on translated latents against the
/// native labels.
Var loss_cross(Tape& tape, const ModelAssembly& model, Domain d, Var z,
               std::span<const double> labels);
/// ||(z W^T) W - z||_F^2 / n for a batch of n latent rows.
Var orth_penalty(Var translator, Var z);
/// Orthogonality penalty summed over both domains.
Var loss_orth(Tape& tape, const ModelAssembly& model, Var z_source, Var z_target);

/// vani_s + vani_t + alpha (cross_s + cross_t) + beta orth. Terms with a zero
/// weight are reported but left out of the differentiated total.
Objective loss_translation_total(Tape& tape, const ModelAssembly& model,
                                 const Batch& source, const Batch& target,
                                 double alpha, double beta);
/// vani_s + vani_t, the jointly trained multi-domain baseline.
Objective loss_joint_vanilla(Tape& tape, const ModelAssembly& model,
                             const Batch& source, const Batch& target);
/// Vanilla loss of one domain only, the single-domain baseline.
Objective loss_single_domain(Tape& tape, const ModelAssembly& model, Domain d,
                             const Batch& batch);
/// BCE of the augmented tower plus beta times the augmented domain's
/// orthogonality penalty. With the translated half masked the penalty is
/// dropped, leaving a plain fine-tuning objective.
Objective loss_augmentation(Tape& tape, const ModelAssembly& model, const Batch& batch,
                            double beta);

}  // namespace cdanet
