// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

// Reverse-mode automatic differentiation over Tensor.
//
// A Tape records every primitive applied to its variables in execution order.
// Calling Tape::backward() on a scalar variable walks the record in reverse and
// accumulates exact gradients into every variable that requires them. A tape
// is a single-threaded unit of work; independent tapes may run concurrently.
//
// Broadcasting is deliberately narrow: add_bias() adds a row vector to every
// row of a matrix and scale() multiplies by a scalar constant. Anything else
// needs operands of identical shape.

#ifndef MEMESCOPE_AUTODIFF_H_
#define MEMESCOPE_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memescope/tensor.h"

namespace memescope {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  // Gradient accumulated by the last backward(); zeros if none reached it.
  Tensor grad() const;
  bool requires_grad() const;
  const std::vector<std::size_t>& shape() const { return value().shape(); }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the gradient flowing into the recorded node's output.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = false);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Records a derived value. requires_grad is inherited from the inputs;
  // `backward` is only invoked when the output received a gradient.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs,
             BackwardFn backward);

  // Reverse pass from a scalar output. Gradients accumulate into existing
  // buffers, so call zero_grad() before reusing a tape.
  void backward(const Var& output);
  void zero_grad();

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  Tensor grad(std::size_t id) const;
  // Mutable accumulator for a node, allocated as zeros on first use.
  Tensor& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(std::size_t id) const { return nodes_[id].op; }

  // Test hook: multiply the gradient passed to every `op` backward rule by
  // `factor`, simulating a broken rule so the gradient checker can be shown
  // to catch it.
  void inject_backward_fault(std::string op, double factor);

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::optional<Tensor> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::optional<std::pair<std::string, double>> fault_;
};

// --- Primitives --------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// x[m x n] + bias[n] applied to every row.
Var add_bias(const Var& x, const Var& bias);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var sum(const Var& a);
Var softmax(const Var& x, std::size_t axis);
// Normalizes each row of x over its last dimension.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Var gelu(const Var& x);
Var embedding_lookup(const Var& table, std::span<const std::size_t> ids);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& x, std::size_t begin, std::size_t count);
Var slice_cols(const Var& x, std::size_t begin, std::size_t count);
// Numerically stable max(z, 0) - z*label + log(1 + exp(-|z|)).
Var bce_with_logits(const Var& logit, double label);

double gelu_value(double x);
double sigmoid(double x);

// --- Gradient verification ---------------------------------------------------

// Builds a scalar on `tape` from the leaf `x`.
using ScalarFunction = std::function<Var(Tape&, const Var& x)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

// Relative error used by every gradient comparison in this project:
// |a - n| / max(|a|, |n|, floor). The floor keeps coordinates whose true
// derivative is zero from dividing rounding noise by ~0.
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Compares backward() against central differences (f(x+h) - f(x-h)) / 2h on
// every coordinate of x.
GradCheckResult grad_check(const ScalarFunction& f, const Tensor& x,
                           double step = 1e-5);

}  // namespace memescope

#endif  // MEMESCOPE_AUTODIFF_H_
