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

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "calico/params.hpp"
#include "calico/tape.hpp"

namespace calico::ad {

using Rng = std::mt19937_64;

// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
Tensor glorot(int rows, int cols, Rng& rng);
Tensor gaussian(int rows, int cols, double stddev, Rng& rng);

// y = x W + b for row-major x (n x in).
struct Linear {
  ParamId weight = -1;
  ParamId bias = -1;

  static Linear create(ParamStore& store, const std::string& prefix, int in,
                       int out, Rng& rng);
  Var operator()(Tape& tape, const ParamStore& store, Var x) const;
};

// Single-direction LSTM with gates packed as [input, forget, candidate,
// output] along the columns of one (in + hidden) x 4*hidden matrix.
struct Lstm {
  ParamId weight = -1;
  ParamId bias = -1;
  int input = 0;
  int hidden = 0;

  static Lstm create(ParamStore& store, const std::string& prefix, int input,
                     int hidden, Rng& rng);
  // Zero initial state. Returns one 1 x hidden state per input, in input
  // order (for reverse=true the sweep runs last-to-first but outputs stay
  // aligned with the inputs).
  std::vector<Var> run(Tape& tape, const ParamStore& store,
                       std::span<const Var> inputs, bool reverse) const;
};

struct BiLstm {
  Lstm forward;
  Lstm backward;

  static BiLstm create(ParamStore& store, const std::string& prefix, int input,
                       int hidden, Rng& rng);
  // h_i = [forward_i ; backward_i], each 1 x 2*hidden.
  std::vector<Var> run(Tape& tape, const ParamStore& store,
                       std::span<const Var> inputs) const;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int checked = 0;
};

// Compares reverse-mode gradients of the scalar built by `f` against central
// differences for every element of `params`. The relative error of one
// element is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const std::function<Var(Tape&)>& f,
                           ParamStore& store, std::span<const ParamId> params,
                           double step = 1e-6, double floor = 1e-6);

}  // namespace calico::ad
