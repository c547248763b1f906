#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "cdanet/autodiff/tape.hpp"
#include "cdanet/error.hpp"

namespace cdanet::ad {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

ConstMap view(std::span<const double> data, std::size_t rows,
              std::size_t cols) {
  return ConstMap(data.data(), static_cast<Eigen::Index>(rows),
                  static_cast<Eigen::Index>(cols));
}

MutMap view(std::span<double> data, std::size_t rows, std::size_t cols) {
  return MutMap(data.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

Tape& same_tape(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw ContractError("operands are recorded on different tapes");
  }
  return *a.tape();
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() > 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

template <typename F>
Var elementwise_binary(Var a, Var b, const char* name, F forward,
                       double grad_a_sign, double grad_b_sign) {
  Tape& tape = same_tape(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_same_shape(ta, tb, name);
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(ta[i], tb[i]);
  const Var inputs[] = {a, b};
  return tape.record(std::move(out), inputs,
                     [a, b, grad_a_sign, grad_b_sign](
                         Tape& t, std::span<const double> g) {
                       if (a.requires_grad()) {
                         auto ga = t.grad_buffer(a);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           ga[i] += grad_a_sign * g[i];
                       }
                       if (b.requires_grad()) {
                         auto gb = t.grad_buffer(b);
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gb[i] += grad_b_sign * g[i];
                       }
                     });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_matrix(ta, "matmul");
  require_matrix(tb, "matmul");
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  if (tb.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " +
                         shape_to_string(ta.shape()) + " x " +
                         shape_to_string(tb.shape()));
  }
  Tensor out(Shape{m, n});
  view(out.values(), m, n).noalias() =
      view(ta.values(), m, k) * view(tb.values(), k, n);
  const Var inputs[] = {a, b};
  return tape.record(
      std::move(out), inputs, [a, b, m, k, n](Tape& t, std::span<const double> g) {
        const auto dc = view(g, m, n);
        if (a.requires_grad()) {
          view(t.grad_buffer(a), m, k).noalias() +=
              dc * view(b.value().values(), k, n).transpose();
        }
        if (b.requires_grad()) {
          view(t.grad_buffer(b), k, n).noalias() +=
              view(a.value().values(), m, k).transpose() * dc;
        }
      });
}

Var transpose(Var x) {
  Tape& tape = *x.tape();
  const Tensor& tx = x.value();
  require_matrix(tx, "transpose");
  const std::size_t r = tx.rows(), c = tx.cols();
  Tensor out(Shape{c, r});
  view(out.values(), c, r) = view(tx.values(), r, c).transpose();
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs,
                     [x, r, c](Tape& t, std::span<const double> g) {
                       view(t.grad_buffer(x), r, c) += view(g, c, r).transpose();
                     });
}

Var add(Var a, Var b) {
  return elementwise_binary(
      a, b, "add", [](double x, double y) { return x + y; }, 1.0, 1.0);
}

Var sub(Var a, Var b) {
  return elementwise_binary(
      a, b, "sub", [](double x, double y) { return x - y; }, 1.0, -1.0);
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Tensor& ta = a.value();
  const Tensor& tb = b.value();
  require_same_shape(ta, tb, "mul");
  Tensor out(ta.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
  const Var inputs[] = {a, b};
  return tape.record(std::move(out), inputs,
                     [a, b](Tape& t, std::span<const double> g) {
                       if (a.requires_grad()) {
                         auto ga = t.grad_buffer(a);
                         const auto& vb = b.value();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           ga[i] += g[i] * vb[i];
                       }
                       if (b.requires_grad()) {
                         auto gb = t.grad_buffer(b);
                         const auto& va = a.value();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           gb[i] += g[i] * va[i];
                       }
                     });
}

Var scale(Var x, double factor) {
  Tape& tape = *x.tape();
  const Tensor& tx = x.value();
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * tx[i];
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs,
                     [x, factor](Tape& t, std::span<const double> g) {
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < g.size(); ++i)
                         gx[i] += factor * g[i];
                     });
}

Var add_bias(Var x, Var bias) {
  Tape& tape = same_tape(x, bias);
  const Tensor& tx = x.value();
  const Tensor& tb = bias.value();
  require_matrix(tx, "add_bias");
  const std::size_t m = tx.rows(), n = tx.cols();
  if (tb.size() != n) {
    throw DimensionError("add_bias: bias " + shape_to_string(tb.shape()) +
                         " does not match columns of " +
                         shape_to_string(tx.shape()));
  }
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = tx[i * n + j] + tb[j];
  const Var inputs[] = {x, bias};
  return tape.record(std::move(out), inputs,
                     [x, bias, m, n](Tape& t, std::span<const double> g) {
                       if (x.requires_grad()) {
                         auto gx = t.grad_buffer(x);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       }
                       if (bias.requires_grad()) {
                         auto gb = t.grad_buffer(bias);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j)
                             gb[j] += g[i * n + j];
                       }
                     });
}

Var concat(Var a, Var b) {
  const Var parts[] = {a, b};
  return concat(parts);
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  Tape& tape = *parts[0].tape();
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.tape() != &tape) throw ContractError("concat across tapes");
    require_matrix(p.value(), "concat");
    if (p.rows() != m) {
      throw DimensionError("concat: leading dimensions disagree " +
                           shape_to_string(parts[0].shape()) + " vs " +
                           shape_to_string(p.shape()));
    }
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out(Shape{m, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.values().begin() + i * widths[k], widths[k],
                  out.values().begin() + i * total + offset);
    offset += widths[k];
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(
      std::move(out), parts,
      [inputs, widths, m, total](Tape& t, std::span<const double> g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          if (inputs[k].requires_grad()) {
            auto gk = t.grad_buffer(inputs[k]);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j)
                gk[i * widths[k] + j] += g[i * total + off + j];
          }
          off += widths[k];
        }
      });
}

Var sigmoid(Var x) {
  Tape& tape = *x.tape();
  const Tensor& tx = x.value();
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(tx[i]);
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs,
                     [x](Tape& t, std::span<const double> g) {
                       auto gx = t.grad_buffer(x);
                       const auto& vx = x.value();
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double s = stable_sigmoid(vx[i]);
                         gx[i] += g[i] * s * (1.0 - s);
                       }
                     });
}

Var relu(Var x) {
  Tape& tape = *x.tape();
  const Tensor& tx = x.value();
  Tensor out(tx.shape());
  // NaN passes through so a poisoned input still surfaces in the loss.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = tx[i] > 0.0 || std::isnan(tx[i]) ? tx[i] : 0.0;
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs,
                     [x](Tape& t, std::span<const double> g) {
                       auto gx = t.grad_buffer(x);
                       const auto& vx = x.value();
                       for (std::size_t i = 0; i < g.size(); ++i)
                         if (vx[i] > 0.0) gx[i] += g[i];
                     });
}

Var softmax_rows(Var x) {
  Tape& tape = *x.tape();
  const Tensor& tx = x.value();
  require_matrix(tx, "softmax_rows");
  const std::size_t m = tx.rows(), n = tx.cols();
  Tensor out(tx.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = &tx.values()[i * n];
    const double hi = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(row[j] - hi);
      z += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
  }
  std::vector<double> probs(out.values().begin(), out.values().end());
  const Var inputs[] = {x};
  return tape.record(std::move(out), inputs,
                     [x, probs = std::move(probs), m, n](
                         Tape& t, std::span<const double> g) {
                       auto gx = t.grad_buffer(x);
                       for (std::size_t i = 0; i < m; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j)
                           dot += g[i * n + j] * probs[i * n + j];
                         for (std::size_t j = 0; j < n; ++j)
                           gx[i * n + j] += probs[i * n + j] * (g[i * n + j] - dot);
                       }
                     });
}

Var gated_sum(Var gates, std::span<const Var> experts) {
  Tape& tape = *gates.tape();
  const Tensor& tg = gates.value();
  require_matrix(tg, "gated_sum");
  const std::size_t m = tg.rows(), e = tg.cols();
  if (experts.size() != e || e == 0) {
    throw DimensionError("gated_sum: " + std::to_string(experts.size()) +
                         " experts for gates " + shape_to_string(tg.shape()));
  }
  const std::size_t d = experts[0].cols();
  for (const Var& x : experts) {
    if (x.tape() != &tape) throw ContractError("gated_sum across tapes");
    if (x.rows() != m || x.cols() != d || x.value().rank() > 2) {
      throw DimensionError("gated_sum: expert output " +
                           shape_to_string(x.shape()) + " does not match " +
                           shape_to_string(experts[0].shape()));
    }
  }
  Tensor out(Shape{m, d});
  for (std::size_t j = 0; j < e; ++j) {
    const auto& v = experts[j].value();
    for (std::size_t i = 0; i < m; ++i) {
      const double w = tg[i * e + j];
      for (std::size_t c = 0; c < d; ++c) out[i * d + c] += w * v[i * d + c];
    }
  }
  std::vector<Var> inputs;
  inputs.push_back(gates);
  inputs.insert(inputs.end(), experts.begin(), experts.end());
  return tape.record(
      std::move(out), inputs,
      [inputs, m, e, d](Tape& t, std::span<const double> g) {
        const Var gates_var = inputs[0];
        const auto& tg = gates_var.value();
        for (std::size_t j = 0; j < e; ++j) {
          const Var ex = inputs[j + 1];
          const auto& v = ex.value();
          if (gates_var.requires_grad()) {
            auto gg = t.grad_buffer(gates_var);
            for (std::size_t i = 0; i < m; ++i) {
              double dot = 0.0;
              for (std::size_t c = 0; c < d; ++c) dot += g[i * d + c] * v[i * d + c];
              gg[i * e + j] += dot;
            }
          }
          if (ex.requires_grad()) {
            auto gx = t.grad_buffer(ex);
            for (std::size_t i = 0; i < m; ++i) {
              const double w = tg[i * e + j];
              for (std::size_t c = 0; c < d; ++c) gx[i * d + c] += w * g[i * d + c];
            }
          }
        }
      });
}

Var sum(Var x) {
  Tape& tape = *x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const Var inputs[] = {x};
  return tape.record(Tensor::scalar(s), inputs,
                     [x](Tape& t, std::span<const double> g) {
                       for (double& v : t.grad_buffer(x)) v += g[0];
                     });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  Tape& tape = *x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const double inv = 1.0 / static_cast<double>(n);
  const Var inputs[] = {x};
  return tape.record(Tensor::scalar(s * inv), inputs,
                     [x, inv](Tape& t, std::span<const double> g) {
                       for (double& v : t.grad_buffer(x)) v += g[0] * inv;
                     });
}

Var frobenius_sq(Var x) {
  Tape& tape = *x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v * v;
  const Var inputs[] = {x};
  return tape.record(Tensor::scalar(s), inputs,
                     [x](Tape& t, std::span<const double> g) {
                       auto gx = t.grad_buffer(x);
                       const auto& vx = x.value();
                       for (std::size_t i = 0; i < gx.size(); ++i)
                         gx[i] += 2.0 * vx[i] * g[0];
                     });
}

Var bce_with_logits(Var logits, std::span<const double> labels) {
  Tape& tape = *logits.tape();
  const Tensor& tl = logits.value();
  const std::size_t n = tl.size();
  if (labels.size() != n) {
    throw DimensionError("bce_with_logits: " + std::to_string(n) +
                         " logits vs " + std::to_string(labels.size()) +
                         " labels");
  }
  if (n == 0) throw ContractError("bce_with_logits on an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) {
      throw ValidationError("bce_with_logits: label " + std::to_string(y) +
                            " at position " + std::to_string(i) +
                            " is not 0 or 1");
    }
    const double l = tl[i];
    // max(l, 0) - l*y + log(1 + exp(-|l|))
    total += std::max(l, 0.0) - l * y + std::log1p(std::exp(-std::abs(l)));
  }
  const double inv = 1.0 / static_cast<double>(n);
  std::vector<double> y(labels.begin(), labels.end());
  const Var inputs[] = {logits};
  return tape.record(Tensor::scalar(total * inv), inputs,
                     [logits, y = std::move(y), inv](Tape& t,
                                                     std::span<const double> g) {
                       auto gl = t.grad_buffer(logits);
                       const auto& vl = logits.value();
                       for (std::size_t i = 0; i < gl.size(); ++i)
                         gl[i] += g[0] * inv * (stable_sigmoid(vl[i]) - y[i]);
                     });
}

Var gather_rows(Var table, std::span<const std::size_t> indices,
                std::string_view field) {
  std::vector<std::size_t> offsets(indices.size() + 1);
  for (std::size_t i = 0; i <= indices.size(); ++i) offsets[i] = i;
  return gather_mean(table, offsets, indices, field);
}

Var gather_mean(Var table, std::span<const std::size_t> offsets,
                std::span<const std::size_t> indices, std::string_view field) {
  Tape& tape = *table.tape();
  const Tensor& tt = table.value();
  if (tt.rank() != 2) {
    throw DimensionError("gather: table for field '" + std::string(field) +
                         "' must be rank 2, got " + shape_to_string(tt.shape()));
  }
  if (offsets.empty() || offsets.back() != indices.size()) {
    throw ContractError("gather: offsets do not cover the index list");
  }
  const std::size_t vocab = tt.rows(), d = tt.cols();
  const std::size_t bags = offsets.size() - 1;
  for (std::size_t idx : indices) {
    if (idx >= vocab) {
      throw ValidationError("field '" + std::string(field) + "': index " +
                            std::to_string(idx) + " out of range for vocab " +
                            std::to_string(vocab));
    }
  }
  Tensor out(Shape{bags, d});
  for (std::size_t b = 0; b < bags; ++b) {
    const std::size_t lo = offsets[b], hi = offsets[b + 1];
    if (hi <= lo) throw ContractError("gather: empty bag");
    const double w = 1.0 / static_cast<double>(hi - lo);
    for (std::size_t p = lo; p < hi; ++p) {
      const double* row = &tt.values()[indices[p] * d];
      for (std::size_t c = 0; c < d; ++c) out[b * d + c] += w * row[c];
    }
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  const Var inputs[] = {table};
  return tape.record(
      std::move(out), inputs,
      [table, off = std::move(off), idx = std::move(idx), d](
          Tape& t, std::span<const double> g) {
        auto gt = t.grad_buffer(table);
        for (std::size_t b = 0; b + 1 < off.size(); ++b) {
          const double w = 1.0 / static_cast<double>(off[b + 1] - off[b]);
          for (std::size_t p = off[b]; p < off[b + 1]; ++p) {
            double* row = &gt[idx[p] * d];
            for (std::size_t c = 0; c < d; ++c) row[c] += w * g[b * d + c];
          }
        }
      });
}

}  // namespace cdanet::ad
