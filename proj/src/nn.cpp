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

#include "calico/nn.hpp"

#include <cmath>

#include "calico/errors.hpp"

namespace calico::ad {

Tensor glorot(int rows, int cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor t(rows, cols);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Tensor gaussian(int rows, int cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor t(rows, cols);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Linear Linear::create(ParamStore& store, const std::string& prefix, int in,
                      int out, Rng& rng) {
  Linear l;
  l.weight = store.add(prefix + ".w", glorot(in, out, rng));
  l.bias = store.add(prefix + ".b", Tensor(1, out, 0.0));
  return l;
}

Var Linear::operator()(Tape& tape, const ParamStore& store, Var x) const {
  return add(matmul(x, tape.param(store, weight)), tape.param(store, bias));
}

Lstm Lstm::create(ParamStore& store, const std::string& prefix, int input,
                  int hidden, Rng& rng) {
  Lstm l;
  l.input = input;
  l.hidden = hidden;
  l.weight = store.add(prefix + ".w", glorot(input + hidden, 4 * hidden, rng));
  Tensor b(1, 4 * hidden, 0.0);
  // Forget-gate bias of 1 keeps early gradients flowing.
  for (int k = hidden; k < 2 * hidden; ++k) b.data[static_cast<std::size_t>(k)] = 1.0;
  l.bias = store.add(prefix + ".b", std::move(b));
  return l;
}

std::vector<Var> Lstm::run(Tape& tape, const ParamStore& store,
                           std::span<const Var> inputs, bool reverse) const {
  if (inputs.empty()) throw ShapeError("LSTM over an empty sequence");
  const Var w = tape.param(store, weight);
  const Var b = tape.param(store, bias);
  const int n = static_cast<int>(inputs.size());
  for (int i = 0; i < n; ++i) {
    const Var x = inputs[static_cast<std::size_t>(i)];
    if (x.rows() != 1 || x.cols() != input) {
      throw ShapeError("LSTM input " + std::to_string(i) + " has shape " +
                       x.value().shape_string() + ", expected 1x" +
                       std::to_string(input));
    }
  }
  // Input projections for all steps at once; only h * W_h is sequential.
  const Var xw = add(matmul(concat_rows(inputs), slice_rows(w, 0, input)), b);
  const Var wh = slice_rows(w, input, hidden);
  Var h = tape.constant(Tensor(1, hidden, 0.0));
  Var c = tape.constant(Tensor(1, hidden, 0.0));
  std::vector<Var> out(inputs.size());
  for (int step = 0; step < n; ++step) {
    const int i = reverse ? n - 1 - step : step;
    const Var z = add(slice_rows(xw, i, 1), matmul(h, wh));
    const Var hc = lstm_cell(z, c);
    h = slice_cols(hc, 0, hidden);
    c = slice_cols(hc, hidden, hidden);
    out[static_cast<std::size_t>(i)] = h;
  }
  return out;
}

BiLstm BiLstm::create(ParamStore& store, const std::string& prefix, int input,
                      int hidden, Rng& rng) {
  BiLstm l;
  l.forward = Lstm::create(store, prefix + ".fwd", input, hidden, rng);
  l.backward = Lstm::create(store, prefix + ".bwd", input, hidden, rng);
  return l;
}

std::vector<Var> BiLstm::run(Tape& tape, const ParamStore& store,
                             std::span<const Var> inputs) const {
  const std::vector<Var> f = forward.run(tape, store, inputs, false);
  const std::vector<Var> r = backward.run(tape, store, inputs, true);
  std::vector<Var> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Var parts[] = {f[i], r[i]};
    out.push_back(concat_cols(parts));
  }
  return out;
}

GradCheckResult grad_check(const std::function<Var(Tape&)>& f,
                           ParamStore& store, std::span<const ParamId> params,
                           double step, double floor) {
  GradStore grads(store);
  {
    Tape tape;
    Var out = f(tape);
    tape.backward(out);
    tape.accumulate(grads);
  }
  auto eval = [&]() {
    Tape tape(false);
    return f(tape).item();
  };
  GradCheckResult res;
  for (ParamId id : params) {
    Tensor& v = store.value(id);
    for (int k = 0; k < v.size(); ++k) {
      const double orig = v.data[static_cast<std::size_t>(k)];
      v.data[static_cast<std::size_t>(k)] = orig + step;
      const double up = eval();
      v.data[static_cast<std::size_t>(k)] = orig - step;
      const double down = eval();
      v.data[static_cast<std::size_t>(k)] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grads[id].data[static_cast<std::size_t>(k)];
      const double denom =
          std::max({std::fabs(analytic), std::fabs(numeric), floor});
      const double rel = std::fabs(analytic - numeric) / denom;
      ++res.checked;
      if (res.worst_index < 0 || rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = store.name(id);
        res.worst_index = k;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace calico::ad
