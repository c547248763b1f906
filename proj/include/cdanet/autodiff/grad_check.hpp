#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cdanet/autodiff/tape.hpp"

namespace cdanet {

/// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
  /// Coordinates whose analytic and numeric values are both below `floor`.
  std::size_t below_floor = 0;
};

/// Compares reverse-mode gradients of `loss` against central differences
/// (f(x+h) - f(x-h)) / 2h for every coordinate of every tensor in `params`.
///
/// Relative error uses max(|analytic|, |numeric|, floor) as denominator. The
/// difference quotient carries roundoff of about 1e-16 |f| / h, so gradients
/// much smaller than that cannot be resolved to a small relative error.
/// Existing gradients on `params` are overwritten. Throws ContractError for
/// h <= 0 or floor <= 0 and DeterminismError when two evaluations at the same
/// point differ.
GradCheckResult grad_check(const LossBuilder& loss,
                           std::span<Tensor* const> params, double h = 1e-5,
                           double floor = 1e-8);

/// Evaluates `loss` without recording gradients into params.
double evaluate_loss(const LossBuilder& loss);

}  // namespace cdanet
