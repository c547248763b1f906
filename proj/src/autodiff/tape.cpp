#include "cdanet/autodiff/tape.hpp"

#include <algorithm>

#include "cdanet/error.hpp"

namespace cdanet {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an empty Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const {
  return tape_ != nullptr && tape_->requires_grad(*this);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(const Tensor& tensor) {
  if (auto it = external_ids_.find(&tensor); it != external_ids_.end()) {
    return Var(this, it->second);
  }
  Node n;
  n.external = &tensor;
  n.requires_grad = grad_enabled_ && tensor.requires_grad;
  nodes_.push_back(std::move(n));
  external_ids_.emplace(&tensor, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
}

Tape::Node& Tape::node(Var v) {
  check_owner(v);
  return nodes_[v.id_];
}

const Tape::Node& Tape::node(Var v) const {
  check_owner(v);
  return nodes_[v.id_];
}

const Tensor& Tape::value(Var v) const {
  const Node& n = node(v);
  return n.external ? *n.external : n.owned;
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

std::span<const double> Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.external) return n.external->grad();
  return n.grad;
}

std::span<double> Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.external) return n.external->grad_accumulator();
  return n.grad;
}

std::vector<const Tensor*> Tape::grad_leaves() const {
  std::vector<std::pair<std::size_t, const Tensor*>> found;
  for (const auto& [tensor, id] : external_ids_) {
    if (nodes_[id].requires_grad) found.emplace_back(id, nodes_[id].external);
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<const Tensor*> out;
  out.reserve(found.size());
  for (auto& f : found) out.push_back(f.second);
  return out;
}

Var Tape::record(Tensor out, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) {
    check_owner(in);
    needs = needs || nodes_[in.id_].requires_grad;
  }
  Node n;
  n.owned = std::move(out);
  n.requires_grad = needs;
  nodes_.push_back(std::move(n));
  const std::size_t id = nodes_.size() - 1;
  if (needs) {
    std::vector<std::size_t> ids;
    ids.reserve(inputs.size());
    for (const Var& in : inputs) ids.push_back(in.id_);
    ops_.push_back(Op{id, std::move(ids), std::move(fn)});
  }
  return Var(this, id);
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (value(loss).size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_to_string(value(loss).shape()));
  }
  for (Node& n : nodes_) {
    if (!n.requires_grad) continue;
    if (n.external) {
      n.external->ensure_grad();
    } else {
      n.grad.assign(n.owned.size(), 0.0);
    }
  }
  if (!node(loss).requires_grad) return;
  grad_buffer(loss)[0] += 1.0;
  // Only ops whose output the loss depends on are replayed.
  std::vector<bool> reached(nodes_.size(), false);
  reached[loss.id_] = true;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    if (it->output > loss.id_ || !reached[it->output]) continue;
    for (std::size_t in : it->inputs) reached[in] = true;
    const Node& out = nodes_[it->output];
    it->fn(*this, out.grad);
  }
}

}  // namespace cdanet
