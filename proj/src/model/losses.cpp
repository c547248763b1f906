#include "cdanet/model/losses.hpp"

#include <string>

#include "cdanet/error.hpp"

namespace cdanet {
namespace {

void check_weights(double alpha, double beta) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0, got " + std::to_string(alpha));
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0, got " + std::to_string(beta));
}

Var latent_of(Tape& tape, const ModelAssembly& model, Domain d, const Batch& b) {
  if (!b.data) throw ContractError("batch without data");
  return model.latent(tape, d, *b.data, b.rows);
}

}  // namespace

std::vector<double> Batch::labels() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(static_cast<double>((*data)[r].label));
  return out;
}

double weighted_translation_total(const LossBreakdown& parts, double alpha, double beta) {
  return parts.vani_s + parts.vani_t + alpha * (parts.cross_s + parts.cross_t) +
         beta * parts.orth;
}

Var loss_vanilla(Tape& tape, const ModelAssembly& model, Domain d, Var z,
                 std::span<const double> labels) {
  return ad::bce_with_logits(model.tower_logit(tape, d, z), labels);
}

Var loss_cross(Tape& tape, const ModelAssembly& model, Domain d, Var z,
               std::span<const double> labels) {
  Var translated = model.translate(tape, d, z);
  return ad::bce_with_logits(model.tower_logit(tape, opposite(d), translated), labels);
}

Var orth_penalty(Var translator, Var z) {
  Var there = ad::matmul(z, ad::transpose(translator));
  Var back = ad::matmul(there, translator);
  const double n = static_cast<double>(z.rows());
  return ad::scale(ad::frobenius_sq(ad::sub(back, z)), 1.0 / n);
}

Var loss_orth(Tape& tape, const ModelAssembly& model, Var z_source, Var z_target) {
  return ad::add(orth_penalty(model.translator(tape, Domain::source), z_source),
                 orth_penalty(model.translator(tape, Domain::target), z_target));
}

Objective loss_translation_total(Tape& tape, const ModelAssembly& model,
                                 const Batch& source, const Batch& target,
                                 double alpha, double beta) {
  check_weights(alpha, beta);
  const auto y_s = source.labels();
  const auto y_t = target.labels();
  Var z_s = latent_of(tape, model, Domain::source, source);
  Var z_t = latent_of(tape, model, Domain::target, target);

  Var vani_s = loss_vanilla(tape, model, Domain::source, z_s, y_s);
  Var vani_t = loss_vanilla(tape, model, Domain::target, z_t, y_t);
  Var cross_s = loss_cross(tape, model, Domain::source, z_s, y_s);
  Var cross_t = loss_cross(tape, model, Domain::target, z_t, y_t);
  Var orth = loss_orth(tape, model, z_s, z_t);

  Var total = ad::add(vani_s, vani_t);
  if (alpha != 0.0) total = ad::add(total, ad::scale(ad::add(cross_s, cross_t), alpha));
  if (beta != 0.0) total = ad::add(total, ad::scale(orth, beta));

  Objective out{total, {}};
  out.parts.vani_s = vani_s.item();
  out.parts.vani_t = vani_t.item();
  out.parts.cross_s = cross_s.item();
  out.parts.cross_t = cross_t.item();
  out.parts.orth = orth.item();
  out.parts.total = total.item();
  return out;
}

Objective loss_joint_vanilla(Tape& tape, const ModelAssembly& model,
                             const Batch& source, const Batch& target) {
  Var vani_s = loss_vanilla(tape, model, Domain::source,
                            latent_of(tape, model, Domain::source, source), source.labels());
  Var vani_t = loss_vanilla(tape, model, Domain::target,
                            latent_of(tape, model, Domain::target, target), target.labels());
  Objective out{ad::add(vani_s, vani_t), {}};
  out.parts.vani_s = vani_s.item();
  out.parts.vani_t = vani_t.item();
  out.parts.total = out.total.item();
  return out;
}

Objective loss_single_domain(Tape& tape, const ModelAssembly& model, Domain d,
                             const Batch& batch) {
  Var loss = loss_vanilla(tape, model, d, latent_of(tape, model, d, batch), batch.labels());
  Objective out{loss, {}};
  (d == Domain::source ? out.parts.vani_s : out.parts.vani_t) = loss.item();
  out.parts.total = loss.item();
  return out;
}

Objective loss_augmentation(Tape& tape, const ModelAssembly& model, const Batch& batch,
                            double beta) {
  check_weights(0.0, beta);
  const Domain d = model.augmented_domain();
  Var z = latent_of(tape, model, d, batch);
  Var aug = ad::bce_with_logits(model.augmented_logit(tape, model.augmented_features(tape, z)),
                                batch.labels());
  Objective out{aug, {}};
  out.parts.aug = aug.item();
  if (!model.mask_translated()) {
    Var orth = orth_penalty(model.translator(tape, d), z);
    out.parts.orth = orth.item();
    if (beta != 0.0) out.total = ad::add(aug, ad::scale(orth, beta));
  }
  out.parts.total = out.total.item();
  return out;
}

}  // namespace cdanet
