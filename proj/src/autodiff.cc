// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include "memescope/autodiff.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "memescope/error.h"

namespace memescope {

// --- Var ---------------------------------------------------------------------

const Tensor& Var::value() const { return tape_->value(id_); }
Tensor Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// --- Tape --------------------------------------------------------------------

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs,
                 BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) {
      throw ContractError(std::string(op) + ": operand recorded on a different tape");
    }
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(std::size_t id) const {
  const Node& node = nodes_[id];
  if (node.grad) return *node.grad;
  return Tensor(node.value.shape(), 0.0);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.grad) node.grad.emplace(node.value.shape(), 0.0);
  return *node.grad;
}

void Tape::zero_grad() {
  for (Node& node : nodes_) node.grad.reset();
}

void Tape::inject_backward_fault(std::string op, double factor) {
  fault_ = std::make_pair(std::move(op), factor);
}

void Tape::backward(const Var& output) {
  if (output.tape() != this) throw ContractError("backward: output is not on this tape");
  if (nodes_[output.id()].value.size() != 1) {
    throw ContractError("backward: output must be a scalar, got shape " +
                        nodes_[output.id()].value.shape_string());
  }
  if (nodes_[output.id()].requires_grad) grad_buffer(output.id())[0] += 1.0;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.grad || !node.backward) continue;
    if (fault_ && fault_->first == node.op) {
      Tensor faulty = *node.grad;
      for (double& g : faulty.storage()) g *= fault_->second;
      node.backward(*this, faulty);
    } else {
      node.backward(*this, *node.grad);
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].requires_grad && nodes_[i].op == "leaf") grad_buffer(i);
  }
}

// --- Primitives --------------------------------------------------------------

namespace {

Tape& tape_of(const Var& a, const char* op) {
  if (!a.valid()) throw ContractError(std::string(op) + ": uninitialized variable");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

void require_rank2(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + a.shape_string());
  }
}

// out[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* out_row = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* out, std::size_t m,
             std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* g_row = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* b_row = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += g_row[j] * b_row[j];
      out[i * k + p] += acc;
    }
  }
}

// out[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* out, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* g_row = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      double* out_row = out + p * n;
      for (std::size_t j = 0; j < n; ++j) out_row[j] += av * g_row[j];
    }
  }
}

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

double gelu_value(double x) {
  return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluC * x * x * x)));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var matmul(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  if (bv.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + av.shape_string() + " x " +
                     bv.shape_string());
  }
  Tensor out({m, n}, 0.0);
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("matmul", std::move(out), {a, b},
                     [ia, ib, m, k, n](Tape& t, const Tensor& g) {
                       if (t.requires_grad(ia)) {
                         gemm_nt(g.data().data(), t.value(ib).data().data(),
                                 t.grad_buffer(ia).data().data(), m, n, k);
                       }
                       if (t.requires_grad(ib)) {
                         gemm_tn(t.value(ia).data().data(), g.data().data(),
                                 t.grad_buffer(ib).data().data(), m, k, n);
                       }
                     });
}

Var transpose(const Var& a) {
  Tape& tape = tape_of(a, "transpose");
  const Tensor& av = a.value();
  require_rank2(av, "transpose");
  const std::size_t m = av.shape()[0], n = av.shape()[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  const std::size_t ia = a.id();
  return tape.record("transpose", std::move(out), {a}, [ia, m, n](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

Var add(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("add", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    for (std::size_t id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor& gx = t.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("sub", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var add_bias(const Var& x, const Var& bias) {
  Tape& tape = tape_of(x, "add_bias");
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bv.size() != n) {
    throw ShapeError("add_bias: bias " + bv.shape_string() + " does not match rows of " +
                     xv.shape_string());
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  const std::size_t ix = x.id(), ib = bias.id();
  return tape.record("add_bias", std::move(out), {x, bias},
                     [ix, ib, m, n](Tape& t, const Tensor& g) {
                       if (t.requires_grad(ix)) {
                         Tensor& gx = t.grad_buffer(ix);
                         for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                       }
                       if (t.requires_grad(ib)) {
                         Tensor& gb = t.grad_buffer(ib);
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                       }
                     });
}

Var mul(const Var& a, const Var& b) {
  Tape& tape = tape_of(a, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record("mul", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      const Tensor& bv = t.value(ib);
      Tensor& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      const Tensor& av = t.value(ia);
      Tensor& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tape& tape = tape_of(a, "scale");
  Tensor out = a.value();
  for (double& v : out.storage()) v *= factor;
  const std::size_t ia = a.id();
  return tape.record("scale", std::move(out), {a}, [ia, factor](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var sum(const Var& a) {
  Tape& tape = tape_of(a, "sum");
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  const std::size_t ia = a.id();
  return tape.record("sum", Tensor::scalar(total), {a}, [ia](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    const double gv = g[0];
    for (double& v : ga.storage()) v += gv;
  });
}

Var softmax(const Var& x, std::size_t axis) {
  Tape& tape = tape_of(x, "softmax");
  const Tensor& xv = x.value();
  const auto& shape = xv.shape();
  if (axis >= shape.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " +
                     xv.shape_string());
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t len = shape[axis];

  Tensor out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, xv[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(xv[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  const std::size_t ix = x.id();
  Tensor saved = out;
  return tape.record(
      "softmax", std::move(out), {x},
      [ix, outer, inner, len, yv = std::move(saved)](Tape& t, const Tensor& g) {
        Tensor& gx = t.grad_buffer(ix);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * yv[base + i * inner];
            for (std::size_t i = 0; i < len; ++i) {
              const std::size_t k = base + i * inner;
              gx[k] += yv[k] * (g[k] - dot);
            }
          }
        }
      });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  Tape& tape = tape_of(x, "layer_norm");
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw ShapeError("layer_norm: gamma " + gamma.value().shape_string() + " / beta " +
                     beta.value().shape_string() + " do not match rows of " +
                     xv.shape_string());
  }
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor out(xv.shape());
  std::vector<double> normalized(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += xv[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xv[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xv[i * n + j] - mean) * inv_std[i];
      normalized[i * n + j] = h;
      out[i * n + j] = gv[j] * h + bv[j];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return tape.record(
      "layer_norm", std::move(out), {x, gamma, beta},
      [ix, ig, ib, m, n, normalized = std::move(normalized),
       inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        if (t.requires_grad(ig)) {
          Tensor& gg = t.grad_buffer(ig);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * normalized[i * n + j];
        }
        if (t.requires_grad(ib)) {
          Tensor& gb = t.grad_buffer(ib);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
        if (t.requires_grad(ix)) {
          const Tensor& gv = t.value(ig);
          Tensor& gx = t.grad_buffer(ix);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = g[i * n + j] * gv[j];
              mean_dh += dh;
              mean_dh_h += dh * normalized[i * n + j];
            }
            mean_dh *= inv_n;
            mean_dh_h *= inv_n;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = g[i * n + j] * gv[j];
              gx[i * n + j] +=
                  inv_std[i] * (dh - mean_dh - normalized[i * n + j] * mean_dh_h);
            }
          }
        }
      });
}

Var gelu(const Var& x) {
  Tape& tape = tape_of(x, "gelu");
  Tensor out = x.value();
  for (double& v : out.storage()) v = gelu_value(v);
  const std::size_t ix = x.id();
  return tape.record("gelu", std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(ix);
    Tensor& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double inner = kSqrt2OverPi * (v + kGeluC * v * v * v);
      const double th = std::tanh(inner);
      const double d_inner = kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
      gx[i] += g[i] * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * d_inner);
    }
  });
}

Var embedding_lookup(const Var& table, std::span<const std::size_t> ids) {
  Tape& tape = tape_of(table, "embedding_lookup");
  const Tensor& tv = table.value();
  require_rank2(tv, "embedding_lookup");
  const std::size_t vocab = tv.shape()[0], d = tv.shape()[1];
  if (ids.empty()) throw ShapeError("embedding_lookup: empty id list");
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(rows[r]) +
                       " outside vocabulary of size " + std::to_string(vocab));
    }
    std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  const std::size_t it = table.id();
  return tape.record("embedding_lookup", std::move(out), {table},
                     [it, d, rows = std::move(rows)](Tape& t, const Tensor& g) {
                       Tensor& gt = t.grad_buffer(it);
                       for (std::size_t r = 0; r < rows.size(); ++r)
                         for (std::size_t j = 0; j < d; ++j) gt[rows[r] * d + j] += g[r * d + j];
                     });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Tape& tape = tape_of(parts[0], "concat_rows");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_rows");
    if (p.value().cols() != n) {
      throw ShapeError("concat_rows: column mismatch " + parts[0].value().shape_string() +
                       " vs " + p.value().shape_string());
    }
    m += p.value().rows();
  }
  Tensor out({m, n});
  std::vector<std::size_t> ids, offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data().begin(), p.value().data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += p.value().size();
  }
  return tape.record("concat_rows", std::move(out), {parts.begin(), parts.end()},
                     [ids, offsets](Tape& t, const Tensor& g) {
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (!t.requires_grad(ids[k])) continue;
                         Tensor& gp = t.grad_buffer(ids[k]);
                         for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[offsets[k] + i];
                       }
                     });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& tape = tape_of(parts[0], "concat_cols");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  for (const Var& p : parts) {
    require_rank2(p.value(), "concat_cols");
    if (p.value().rows() != m) {
      throw ShapeError("concat_cols: row mismatch " + parts[0].value().shape_string() +
                       " vs " + p.value().shape_string());
    }
    n += p.value().cols();
  }
  Tensor out({m, n});
  std::vector<std::size_t> ids, col_offsets, widths;
  std::size_t col = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.value().cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * n + col + j] = p.value()[i * w + j];
    ids.push_back(p.id());
    col_offsets.push_back(col);
    widths.push_back(w);
    col += w;
  }
  return tape.record("concat_cols", std::move(out), {parts.begin(), parts.end()},
                     [ids, col_offsets, widths, m, n](Tape& t, const Tensor& g) {
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (!t.requires_grad(ids[k])) continue;
                         Tensor& gp = t.grad_buffer(ids[k]);
                         const std::size_t w = widths[k];
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < w; ++j)
                             gp[i * w + j] += g[i * n + col_offsets[k] + j];
                       }
                     });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(x, "slice_rows");
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_rows");
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  if (count == 0 || begin + count > m) {
    throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + xv.shape_string());
  }
  std::vector<double> data(xv.data().begin() + static_cast<std::ptrdiff_t>(begin * n),
                           xv.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  const std::size_t ix = x.id();
  return tape.record("slice_rows", Tensor({count, n}, std::move(data)), {x},
                     [ix, begin, n](Tape& t, const Tensor& g) {
                       Tensor& gx = t.grad_buffer(ix);
                       for (std::size_t i = 0; i < g.size(); ++i) gx[begin * n + i] += g[i];
                     });
}

Var slice_cols(const Var& x, std::size_t begin, std::size_t count) {
  Tape& tape = tape_of(x, "slice_cols");
  const Tensor& xv = x.value();
  require_rank2(xv, "slice_cols");
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  if (count == 0 || begin + count > n) {
    throw ShapeError("slice_cols: cols [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + xv.shape_string());
  }
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xv[i * n + begin + j];
  const std::size_t ix = x.id();
  return tape.record("slice_cols", std::move(out), {x},
                     [ix, begin, count, m, n](Tape& t, const Tensor& g) {
                       Tensor& gx = t.grad_buffer(ix);
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < count; ++j)
                           gx[i * n + begin + j] += g[i * count + j];
                     });
}

Var bce_with_logits(const Var& logit, double label) {
  Tape& tape = tape_of(logit, "bce_with_logits");
  const double z = logit.value().item();
  const double loss = std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
  const std::size_t iz = logit.id();
  return tape.record("bce_with_logits", Tensor::scalar(loss), {logit},
                     [iz, label](Tape& t, const Tensor& g) {
                       const double zv = t.value(iz)[0];
                       t.grad_buffer(iz)[0] += g[0] * (sigmoid(zv) - label);
                     });
}

// --- Gradient verification ---------------------------------------------------

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult grad_check(const ScalarFunction& f, const Tensor& x, double step) {
  Tensor analytic;
  {
    Tape tape;
    Var leaf = tape.leaf(x, true);
    Var out = f(tape, leaf);
    tape.backward(out);
    analytic = leaf.grad();
  }
  auto evaluate = [&](const Tensor& point) {
    Tape tape;
    Var leaf = tape.leaf(point, false);
    return f(tape, leaf).value().item();
  };
  GradCheckResult result;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = evaluate(probe);
    probe[i] = x[i] - step;
    const double down = evaluate(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * step);
    const double err = relative_error(analytic[i], numeric);
    if (i == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.worst_analytic = analytic[i];
      result.worst_numeric = numeric;
    }
  }
  result.coordinates_checked = x.size();
  return result;
}

}  // namespace memescope
