/* Copyright 2026 The Calico Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "calico/params.hpp"
#include "calico/tensor.hpp"

namespace calico::ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Tensor& grad() const;
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
  int size() const { return value().size(); }
  // Value of a 1 x 1 node.
  double item() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Records a computation graph for reverse-mode differentiation. Nodes are
// appended in evaluation order, which is a topological order, so backward is a
// single reverse sweep. With recording disabled no backward closures are kept
// (evaluation-only mode).
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor value);
  Var scalar(double v) { return constant(Tensor::scalar(v)); }
  // Leaf bound to a parameter. Repeated calls for the same id share a node.
  Var param(const ParamStore& store, ParamId id);

  // Seeds d(root)/d(root) = 1 for a 1 x 1 root and sweeps backward.
  void backward(Var root);
  // Adds gradients reaching parameter leaves into `grads`.
  void accumulate(GradStore& grads) const;

  int size() const { return static_cast<int>(nodes_.size()); }

  // Primitive plumbing, used by the op implementations.
  Var push(Tensor value, BackwardFn fn);
  const Tensor& value(int id) const;
  const Tensor& grad(int id) const;
  Tensor& grad_mut(int id);  // allocates zeros on first use
  // Constants never need a gradient.
  bool is_constant(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.param < 0 && !n.backward;
  }
  bool has_grad(int id) const {
    return !nodes_[static_cast<std::size_t>(id)].grad.empty();
  }

 private:
  struct Node {
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    BackwardFn backward;
    ParamId param = -1;
  };
  bool record_;
  std::deque<Node> nodes_;
  std::vector<int> param_nodes_;  // param id -> node id (or -1)
};

// ---- primitives -----------------------------------------------------------
// Binary elementwise ops accept equal shapes, or a right operand that is a
// 1 x 1 scalar or a 1 x cols row broadcast over the rows of the left operand.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, int start, int count);
Var slice_rows(Var a, int start, int count);
Var gather_rows(Var a, std::vector<int> rows);
Var reshape(Var a, int rows, int cols);
Var pick(Var a, int flat_index);

Var sum(Var a);
Var sum_rows(Var a);  // column sums: r x c -> 1 x c
Var mean(Var a);
// Ties route the gradient to the first extremal element.
Var max(Var a);
Var min(Var a);
Var max2(Var a, Var b);  // scalar max, ties -> a
Var min2(Var a, Var b);  // scalar min, ties -> a

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);
Var logsumexp(Var a);

// Divides each row by its Euclidean norm; throws ZeroVector below 1e-12.
Var l2_normalize_rows(Var a);
Var dot(Var a, Var b);
Var softmax(Var a);

// One LSTM step from packed pre-activations z = [i, f, g, o] (1 x 4H) and the
// previous cell state (1 x H). Returns [h, c] (1 x 2H).
Var lstm_cell(Var z, Var c_prev);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace calico::ad
