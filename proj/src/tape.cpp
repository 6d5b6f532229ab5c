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

#include "calico/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "calico/errors.hpp"

namespace calico::ad {

Tensor Tensor::matrix(int r, int c, std::initializer_list<double> values) {
  if (static_cast<int>(values.size()) != r * c) {
    throw ShapeError("matrix literal has " + std::to_string(values.size()) +
                     " values for shape " + std::to_string(r) + "x" +
                     std::to_string(c));
  }
  Tensor t(r, c);
  std::copy(values.begin(), values.end(), t.data.begin());
  return t;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

// ---- Var / Tape -------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }

double Var::item() const {
  const Tensor& v = value();
  if (v.size() != 1) {
    throw ShapeError("item() on non-scalar of shape " + v.shape_string());
  }
  return v.data[0];
}

Var Tape::push(Tensor value, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor value) { return push(std::move(value), nullptr); }

Var Tape::param(const ParamStore& store, ParamId id) {
  if (id < 0 || id >= store.size()) {
    throw ShapeError("unknown parameter id " + std::to_string(id));
  }
  if (static_cast<int>(param_nodes_.size()) < store.size()) {
    param_nodes_.resize(static_cast<std::size_t>(store.size()), -1);
  }
  int& slot = param_nodes_[static_cast<std::size_t>(id)];
  if (slot >= 0) return Var{this, slot};
  Node n;
  n.external = &store.value(id);
  n.param = id;
  nodes_.push_back(std::move(n));
  slot = static_cast<int>(nodes_.size()) - 1;
  return Var{this, slot};
}

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external != nullptr ? *n.external : n.value;
}

const Tensor& Tape::grad(int id) const {
  return nodes_[static_cast<std::size_t>(id)].grad;
}

Tensor& Tape::grad_mut(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) {
    const Tensor& v = value(id);
    n.grad = Tensor(v.rows, v.cols, 0.0);
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (!record_) throw ShapeError("backward on a non-recording tape");
  if (root.tape != this) throw ShapeError("backward root from another tape");
  if (value(root.id).size() != 1) {
    throw ShapeError("backward root must be 1x1, got " +
                     value(root.id).shape_string());
  }
  grad_mut(root.id).data[0] += 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

void Tape::accumulate(GradStore& grads) const {
  for (const Node& n : nodes_) {
    if (n.param < 0 || n.grad.empty()) continue;
    Tensor& g = grads[n.param];
    if (g.empty()) g = Tensor(n.grad.rows, n.grad.cols, 0.0);
    for (int k = 0; k < g.size(); ++k) g.data[k] += n.grad.data[k];
  }
}

// ---- helpers ----------------------------------------------------------------

namespace {

enum class Bcast { kSame, kScalar, kRow };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.same_shape(b)) return Bcast::kSame;
  if (b.rows == 1 && b.cols == 1) return Bcast::kScalar;
  if (b.rows == 1 && b.cols == a.cols) return Bcast::kRow;
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   a.shape_string() + " and " + b.shape_string());
}

inline double bval(const Tensor& b, Bcast k, int r, int c) {
  switch (k) {
    case Bcast::kSame: return b(r, c);
    case Bcast::kScalar: return b.data[0];
    case Bcast::kRow: return b.data[static_cast<std::size_t>(c)];
  }
  return 0.0;
}

inline double& bref(Tensor& b, Bcast k, int r, int c) {
  switch (k) {
    case Bcast::kSame: return b(r, c);
    case Bcast::kScalar: return b.data[0];
    case Bcast::kRow: return b.data[static_cast<std::size_t>(c)];
  }
  return b.data[0];
}

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw ShapeError("operands live on different tapes");
  }
}

template <typename F, typename D>
Var unary(Var a, F f, D dfdx_from_xy) {
  const Tensor& x = a.value();
  Tensor y(x.rows, x.cols);
  for (int k = 0; k < x.size(); ++k) y.data[k] = f(x.data[k]);
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai, dfdx_from_xy](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ai);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_mut(ai);
    for (int k = 0; k < g.size(); ++k) {
      ga.data[k] += g.data[k] * dfdx_from_xy(x.data[k], y.data[k]);
    }
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace

// ---- elementwise --------------------------------------------------------------

Var add(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const Bcast k = broadcast_kind(x, z, "add");
  Tensor y(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) y(r, c) = x(r, c) + bval(z, k, r, c);
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), [ai, bi, k](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (int i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    Tensor& gb = t.grad_mut(bi);
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) bref(gb, k, r, c) += g(r, c);
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const Bcast k = broadcast_kind(x, z, "sub");
  Tensor y(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) y(r, c) = x(r, c) - bval(z, k, r, c);
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), [ai, bi, k](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (int i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    Tensor& gb = t.grad_mut(bi);
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) bref(gb, k, r, c) -= g(r, c);
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  const Bcast k = broadcast_kind(x, z, "mul");
  Tensor y(x.rows, x.cols);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) y(r, c) = x(r, c) * bval(z, k, r, c);
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), [ai, bi, k](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ai);
    const Tensor& z = t.value(bi);
    // Compute both contributions before writing: a and b may be the same node.
    Tensor da(g.rows, g.cols);
    Tensor db = Tensor(z.rows, z.cols, 0.0);
    for (int r = 0; r < g.rows; ++r) {
      for (int c = 0; c < g.cols; ++c) {
        da(r, c) = g(r, c) * bval(z, k, r, c);
        bref(db, k, r, c) += g(r, c) * x(r, c);
      }
    }
    Tensor& ga = t.grad_mut(ai);
    for (int i = 0; i < da.size(); ++i) ga.data[i] += da.data[i];
    Tensor& gb = t.grad_mut(bi);
    for (int i = 0; i < db.size(); ++i) gb.data[i] += db.data[i];
  });
}

Var scale(Var a, double s) {
  return unary(
      a, [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(
      a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return stable_sigmoid(x); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Var a) {
  return unary(
      a,
      [](double x) {
        return std::log1p(std::exp(-std::fabs(x))) + (x > 0.0 ? x : 0.0);
      },
      [](double x, double) { return stable_sigmoid(x); });
}

Var exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

// ---- linear algebra -----------------------------------------------------------

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (x.cols != z.rows) {
    throw ShapeError("matmul: " + x.shape_string() + " * " + z.shape_string());
  }
  const int m = x.rows, kk = x.cols, n = z.cols;
  Tensor y(m, n, 0.0);
  for (int i = 0; i < m; ++i) {
    double* yi = &y.data[static_cast<std::size_t>(i) * n];
    for (int p = 0; p < kk; ++p) {
      const double xip = x(i, p);
      if (xip == 0.0) continue;
      const double* zp = &z.data[static_cast<std::size_t>(p) * n];
      for (int j = 0; j < n; ++j) yi[j] += xip * zp[j];
    }
  }
  const int ai = a.id, bi = b.id;
  return a.tape->push(std::move(y), [ai, bi](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ai);
    const Tensor& z = t.value(bi);
    const int m = x.rows, kk = x.cols, n = z.cols;
    const bool need_a = !t.is_constant(ai), need_b = !t.is_constant(bi);
    if (need_a) {
      Tensor& ga = t.grad_mut(ai);
      for (int i = 0; i < m; ++i) {
        const double* gi = &g.data[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < kk; ++p) {
          const double* zp = &z.data[static_cast<std::size_t>(p) * n];
          double acc = 0.0;
          for (int j = 0; j < n; ++j) acc += gi[j] * zp[j];
          ga(i, p) += acc;
        }
      }
    }
    if (need_b) {
      Tensor& gb = t.grad_mut(bi);
      for (int i = 0; i < m; ++i) {
        const double* gi = &g.data[static_cast<std::size_t>(i) * n];
        for (int p = 0; p < kk; ++p) {
          const double xip = x(i, p);
          if (xip == 0.0) continue;
          double* gbp = &gb.data[static_cast<std::size_t>(p) * n];
          for (int j = 0; j < n; ++j) gbp[j] += xip * gi[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.cols, x.rows);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) y(c, r) = x(r, c);
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (int r = 0; r < ga.rows; ++r)
      for (int c = 0; c < ga.cols; ++c) ga(r, c) += g(c, r);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Tensor y(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  int off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < v.cols; ++c) y(r, off + c) = v(r, c);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.cols;
  }
  return parts[0].tape->push(
      std::move(y), [ids, offsets](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          Tensor& gp = t.grad_mut(ids[k]);
          for (int r = 0; r < gp.rows; ++r)
            for (int c = 0; c < gp.cols; ++c) gp(r, c) += g(r, offsets[k] + c);
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Tensor y(rows, cols);
  std::vector<int> ids;
  std::vector<int> offsets;
  int off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.data.begin(), v.data.end(),
              y.data.begin() + static_cast<std::ptrdiff_t>(off) * cols);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += v.rows;
  }
  return parts[0].tape->push(
      std::move(y), [ids, offsets, cols](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
          Tensor& gp = t.grad_mut(ids[k]);
          const double* src =
              &g.data[static_cast<std::size_t>(offsets[k]) * cols];
          for (int i = 0; i < gp.size(); ++i) gp.data[i] += src[i];
        }
      });
}

Var slice_cols(Var a, int start, int count) {
  const Tensor& x = a.value();
  if (start < 0 || count < 0 || start + count > x.cols) {
    throw ShapeError("slice_cols out of range on " + x.shape_string());
  }
  Tensor y(x.rows, count);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < count; ++c) y(r, c) = x(r, start + c);
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai, start](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (int r = 0; r < g.rows; ++r)
      for (int c = 0; c < g.cols; ++c) ga(r, start + c) += g(r, c);
  });
}

Var slice_rows(Var a, int start, int count) {
  const Tensor& x = a.value();
  if (start < 0 || count < 0 || start + count > x.rows) {
    throw ShapeError("slice_rows out of range on " + x.shape_string());
  }
  Tensor y(count, x.cols);
  std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(start) * x.cols,
            x.data.begin() + static_cast<std::ptrdiff_t>(start + count) * x.cols,
            y.data.begin());
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai, start](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    const std::size_t off = static_cast<std::size_t>(start) * ga.cols;
    for (int i = 0; i < g.size(); ++i) ga.data[off + i] += g.data[i];
  });
}

Var gather_rows(Var a, std::vector<int> rows) {
  const Tensor& x = a.value();
  Tensor y(static_cast<int>(rows.size()), x.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= x.rows) {
      throw ShapeError("gather_rows index out of range");
    }
    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(rows[r]) * x.cols,
              x.data.begin() + static_cast<std::ptrdiff_t>(rows[r] + 1) * x.cols,
              y.data.begin() + static_cast<std::ptrdiff_t>(r) * x.cols);
  }
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai, rows = std::move(rows)](Tape& t,
                                                                 int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (int c = 0; c < g.cols; ++c) ga(rows[r], c) += g(static_cast<int>(r), c);
  });
}

Var reshape(Var a, int rows, int cols) {
  const Tensor& x = a.value();
  if (rows * cols != x.size()) {
    throw ShapeError("reshape " + x.shape_string() + " to " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Tensor y = x;
  y.rows = rows;
  y.cols = cols;
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (int i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
  });
}

Var pick(Var a, int flat_index) {
  const Tensor& x = a.value();
  if (flat_index < 0 || flat_index >= x.size()) {
    throw ShapeError("pick index out of range on " + x.shape_string());
  }
  const int ai = a.id;
  return a.tape->push(Tensor::scalar(x.data[static_cast<std::size_t>(flat_index)]),
                      [ai, flat_index](Tape& t, int self) {
                        t.grad_mut(ai).data[static_cast<std::size_t>(flat_index)] +=
                            t.grad(self).data[0];
                      });
}

// ---- reductions ----------------------------------------------------------------

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data) s += v;
  const int ai = a.id;
  return a.tape->push(Tensor::scalar(s), [ai](Tape& t, int self) {
    const double g = t.grad(self).data[0];
    Tensor& ga = t.grad_mut(ai);
    for (double& v : ga.data) v += g;
  });
}

Var sum_rows(Var a) {
  const Tensor& x = a.value();
  Tensor y(1, x.cols, 0.0);
  for (int r = 0; r < x.rows; ++r)
    for (int c = 0; c < x.cols; ++c) y.data[static_cast<std::size_t>(c)] += x(r, c);
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad_mut(ai);
    for (int r = 0; r < ga.rows; ++r)
      for (int c = 0; c < ga.cols; ++c) ga(r, c) += g.data[static_cast<std::size_t>(c)];
  });
}

Var mean(Var a) {
  const int n = a.size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

namespace {

Var extremum(Var a, bool want_max) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw ShapeError("max/min of empty tensor");
  int best = 0;
  for (int k = 1; k < x.size(); ++k) {
    if (want_max ? x.data[k] > x.data[best] : x.data[k] < x.data[best]) best = k;
  }
  const int ai = a.id;
  return a.tape->push(Tensor::scalar(x.data[static_cast<std::size_t>(best)]),
                      [ai, best](Tape& t, int self) {
                        t.grad_mut(ai).data[static_cast<std::size_t>(best)] +=
                            t.grad(self).data[0];
                      });
}

Var extremum2(Var a, Var b, bool want_max) {
  check_same_tape(a, b);
  const double x = a.item();
  const double z = b.item();
  const bool take_a = want_max ? x >= z : x <= z;
  const int src = take_a ? a.id : b.id;
  return a.tape->push(Tensor::scalar(take_a ? x : z), [src](Tape& t, int self) {
    t.grad_mut(src).data[0] += t.grad(self).data[0];
  });
}

}  // namespace

Var max(Var a) { return extremum(a, true); }
Var min(Var a) { return extremum(a, false); }
Var max2(Var a, Var b) { return extremum2(a, b, true); }
Var min2(Var a, Var b) { return extremum2(a, b, false); }

Var logsumexp(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw ShapeError("logsumexp of empty tensor");
  const double m = *std::max_element(x.data.begin(), x.data.end());
  double s = 0.0;
  for (double v : x.data) s += std::exp(v - m);
  const double out = m + std::log(s);
  const int ai = a.id;
  return a.tape->push(Tensor::scalar(out), [ai](Tape& t, int self) {
    const double g = t.grad(self).data[0];
    const double y = t.value(self).data[0];
    const Tensor& x = t.value(ai);
    Tensor& ga = t.grad_mut(ai);
    for (int k = 0; k < x.size(); ++k) ga.data[k] += g * std::exp(x.data[k] - y);
  });
}

Var l2_normalize_rows(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.rows, x.cols);
  std::vector<double> norms(static_cast<std::size_t>(x.rows));
  for (int r = 0; r < x.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < x.cols; ++c) s += x(r, c) * x(r, c);
    const double n = std::sqrt(s);
    if (!(n >= 1e-12)) {
      throw ZeroVector("cannot normalize a vector with norm " +
                       std::to_string(n));
    }
    norms[static_cast<std::size_t>(r)] = n;
    for (int c = 0; c < x.cols; ++c) y(r, c) = x(r, c) / n;
  }
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai, norms = std::move(norms)](Tape& t,
                                                                   int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_mut(ai);
    for (int r = 0; r < g.rows; ++r) {
      double yg = 0.0;
      for (int c = 0; c < g.cols; ++c) yg += y(r, c) * g(r, c);
      const double inv = 1.0 / norms[static_cast<std::size_t>(r)];
      for (int c = 0; c < g.cols; ++c) ga(r, c) += (g(r, c) - y(r, c) * yg) * inv;
    }
  });
}

Var dot(Var a, Var b) {
  check_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& z = b.value();
  if (!x.same_shape(z)) {
    throw ShapeError("dot: " + x.shape_string() + " . " + z.shape_string());
  }
  double s = 0.0;
  for (int k = 0; k < x.size(); ++k) s += x.data[k] * z.data[k];
  const int ai = a.id, bi = b.id;
  return a.tape->push(Tensor::scalar(s), [ai, bi](Tape& t, int self) {
    const double g = t.grad(self).data[0];
    const Tensor& x = t.value(ai);
    const Tensor& z = t.value(bi);
    std::vector<double> da(x.data.size()), db(z.data.size());
    for (std::size_t k = 0; k < da.size(); ++k) {
      da[k] = g * z.data[k];
      db[k] = g * x.data[k];
    }
    Tensor& ga = t.grad_mut(ai);
    for (std::size_t k = 0; k < da.size(); ++k) ga.data[k] += da[k];
    Tensor& gb = t.grad_mut(bi);
    for (std::size_t k = 0; k < db.size(); ++k) gb.data[k] += db[k];
  });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.size() == 0) throw ShapeError("softmax of empty tensor");
  const double m = *std::max_element(x.data.begin(), x.data.end());
  Tensor y(x.rows, x.cols);
  double s = 0.0;
  for (int k = 0; k < x.size(); ++k) {
    y.data[k] = std::exp(x.data[k] - m);
    s += y.data[k];
  }
  for (double& v : y.data) v /= s;
  const int ai = a.id;
  return a.tape->push(std::move(y), [ai](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    double gy = 0.0;
    for (int k = 0; k < g.size(); ++k) gy += g.data[k] * y.data[k];
    Tensor& ga = t.grad_mut(ai);
    for (int k = 0; k < g.size(); ++k) ga.data[k] += y.data[k] * (g.data[k] - gy);
  });
}

Var lstm_cell(Var z, Var c_prev) {
  check_same_tape(z, c_prev);
  const Tensor& zv = z.value();
  const Tensor& cv = c_prev.value();
  const int h = cv.cols;
  if (zv.rows != 1 || cv.rows != 1 || zv.cols != 4 * h) {
    throw ShapeError("lstm_cell: " + zv.shape_string() + " with " + cv.shape_string());
  }
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  Tensor y(1, 2 * h);
  for (int k = 0; k < h; ++k) {
    const double i = sig(zv[k]), f = sig(zv[h + k]), g = std::tanh(zv[2 * h + k]),
                 o = sig(zv[3 * h + k]);
    const double c = f * cv[k] + i * g;
    y[h + k] = c;
    y[k] = o * std::tanh(c);
  }
  const int zi = z.id, ci = c_prev.id;
  return z.tape->push(std::move(y), [zi, ci, h, sig](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    const Tensor& zv = t.value(zi);
    const Tensor& cv = t.value(ci);
    const Tensor& y = t.value(self);
    const bool need_c = !t.is_constant(ci);
    Tensor& gz = t.grad_mut(zi);
    for (int k = 0; k < h; ++k) {
      const double i = sig(zv[k]), f = sig(zv[h + k]), g = std::tanh(zv[2 * h + k]),
                   o = sig(zv[3 * h + k]);
      const double tc = std::tanh(y[h + k]);
      const double dh = gy[k];
      const double dc = gy[h + k] + dh * o * (1.0 - tc * tc);
      gz[k] += dc * g * i * (1.0 - i);
      gz[h + k] += dc * cv[k] * f * (1.0 - f);
      gz[2 * h + k] += dc * i * (1.0 - g * g);
      gz[3 * h + k] += dh * tc * o * (1.0 - o);
      if (need_c) t.grad_mut(ci)[k] += dc * f;
    }
  });
}

}  // namespace calico::ad
