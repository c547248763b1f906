#include "cdanet/autodiff/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "cdanet/error.hpp"

namespace cdanet {

double evaluate_loss(const LossBuilder& loss) {
  Tape tape(false);
  const Var out = loss(tape);
  return out.item();
}

GradCheckResult grad_check(const LossBuilder& loss,
                           std::span<Tensor* const> params, double h,
                           double floor) {
  if (!(h > 0.0)) throw ContractError("grad_check: step h must be positive");
  if (!(floor > 0.0)) throw ContractError("grad_check: floor must be positive");
  for (const Tensor* p : params) {
    if (!p->requires_grad) {
      throw ContractError("grad_check: parameter does not require grad");
    }
  }

  const double f0 = evaluate_loss(loss);
  const double f1 = evaluate_loss(loss);
  if (std::memcmp(&f0, &f1, sizeof(double)) != 0) {
    throw DeterminismError("grad_check: loss differs across two evaluations (" +
                           std::to_string(f0) + " vs " + std::to_string(f1) +
                           ")");
  }

  std::vector<std::vector<double>> analytic;
  {
    for (Tensor* p : params) p->zero_grad();
    Tape tape;
    tape.backward(loss(tape));
    for (Tensor* p : params) {
      analytic.emplace_back(p->grad().begin(), p->grad().end());
    }
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double up = evaluate_loss(loss);
      p[i] = saved - h;
      const double down = evaluate_loss(loss);
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates;
      if (std::abs(a) < floor && std::abs(numeric) < floor) ++result.below_floor;
      if (rel > result.max_rel_error || std::isnan(rel)) {
        result.max_rel_error = std::isnan(rel) ? INFINITY : rel;
        result.worst_param = pi;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace cdanet
