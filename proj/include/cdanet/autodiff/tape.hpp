#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cdanet/autodiff/tensor.hpp"

namespace cdanet {

class Tape;

/// Handle to a tensor recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run record of primitive operations.
///
/// Leaves either own their tensor (constants, test variables) or reference an
/// external tensor such as a model parameter. Gradients of external leaves
/// accumulate into the referenced tensor's grad buffer across backward calls
/// until zeroed by the owner; gradients of recorded intermediates are reset at
/// the start of every backward call.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  /// A tape without gradients records no backward closures (inference).
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Owned leaf that receives a gradient; read it back with grad().
  Var variable(Tensor value);
  /// Leaf referencing an external tensor such as a parameter. It requires a
  /// gradient when the tensor does and the tape has gradients enabled. Repeated
  /// calls with the same tensor return the same Var.
  Var leaf(const Tensor& tensor);

  bool grad_enabled() const { return grad_enabled_; }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient of v from the most recent backward call.
  std::span<const double> grad(Var v) const;

  void backward(Var loss);

  std::size_t op_count() const { return ops_.size(); }
  /// External leaves that require a gradient, in first-use order.
  std::vector<const Tensor*> grad_leaves() const;

  // Interface used by operation implementations.
  Var record(Tensor out, std::span<const Var> inputs, BackwardFn fn);
  std::span<double> grad_buffer(Var v);

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
  };
  struct Op {
    std::size_t output;
    std::vector<std::size_t> inputs;
    BackwardFn fn;
  };

  Node& node(Var v);
  const Node& node(Var v) const;
  void check_owner(Var v) const;

  bool grad_enabled_ = true;
  std::deque<Node> nodes_;
  std::vector<Op> ops_;
  std::unordered_map<const Tensor*, std::size_t> external_ids_;
};

namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
/// x[m x n] + bias broadcast over rows; bias has n elements.
Var add_bias(Var x, Var bias);
/// Column concatenation of matrices sharing a row count.
Var concat(Var a, Var b);
Var concat(std::span<const Var> parts);
Var sigmoid(Var x);
Var relu(Var x);
Var softmax_rows(Var x);
/// Row-wise convex mix: out[i] = sum_j gates[i, j] * experts[j][i].
Var gated_sum(Var gates, std::span<const Var> experts);
Var sum(Var x);
Var mean(Var x);
Var frobenius_sq(Var x);
/// Mean binary cross entropy between sigmoid(logits) and labels in {0, 1},
/// evaluated in logit space.
Var bce_with_logits(Var logits, std::span<const double> labels);
/// Stacks table rows; duplicate indices scatter-add in backward.
Var gather_rows(Var table, std::span<const std::size_t> indices,
                std::string_view field = "table");
/// Mean of table rows per bag; bag i spans indices[offsets[i], offsets[i+1]).
Var gather_mean(Var table, std::span<const std::size_t> offsets,
                std::span<const std::size_t> indices,
                std::string_view field = "table");

}  // namespace ad
}  // namespace cdanet
