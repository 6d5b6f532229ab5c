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

#include <string>
#include <vector>

#include <json.hpp>

#include "calico/executor.hpp"
#include "calico/trainer.hpp"

namespace calico {

struct MagnitudeRow {
  std::string concept_name;
  int count = 0;  // gold answers of query / query_rel questions
  double log_count = 0.0;
  double magnitude = 0.0;
};

// Effective query-module magnitude of every concept that is the answer of at
// least one query or query_rel question: the calibrated scalar, the
// direction norm (unnormalized mode) or 1 (normalized mode).
std::vector<MagnitudeRow> magnitude_table(const Model& model,
                                          const std::vector<Example>& examples);

// Rank correlation with average ranks for ties. Returns 0 when either side is
// constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Per-node {"index", "op", "weight", "logit", "removable"} for one program.
nlohmann::json operation_weights(const Model& model, const Program& p);

}  // namespace calico
