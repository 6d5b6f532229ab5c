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

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "calico/trainer.hpp"

namespace calico {

inline std::vector<double> default_thresholds() {
  const double inf = std::numeric_limits<double>::infinity();
  return {-inf, -2.0, -1.0, -0.5, 0.0, inf};
}

struct PerturbedProgram {
  Program program;
  int removable = 0;  // removable nodes in the original program
  int removed = 0;    // of those, how many are gone
};

// Removes every removable node whose predicted logit is below `threshold`.
// Single pass on the original logits, or re-predicted until nothing more is
// removed when `iterative` is set.
PerturbedProgram perturb_program(const Model& model, const Program& p, double threshold,
                                 bool iterative = false);

struct PerturbedSet {
  double threshold = 0.0;
  Dataset data;
  int removable = 0;
  int removed = 0;
  int modified = 0;  // questions whose program changed
};

// Throws ConfigError when the model carries no operation calibrator.
std::vector<PerturbedSet> perturb_set(const Model& model, const Dataset& data,
                                      const std::vector<double>& thresholds,
                                      bool iterative = false);

struct PerturbRow {
  double threshold = 0.0;
  double frac_removed = 0.0;
  double frac_questions_modified = 0.0;
  double accuracy = 0.0;
  double delta = 0.0;  // accuracy minus accuracy on the unperturbed set
};

struct PerturbReport {
  double original_accuracy = 0.0;
  std::vector<PerturbRow> rows;

  // threshold,frac_removed,frac_questions_modified,accuracy,delta
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

PerturbReport curve(const Model& model, const Dataset& data,
                    const std::vector<double>& thresholds, bool iterative = false,
                    int threads = 1);

using EasyCriterion = std::function<bool(const Example&, const Scene&)>;

// Questions answered correctly by the model with unit magnitudes and
// equal-weight merging.
EasyCriterion unit_weight_criterion(const Model& model);

// {easy, hard}; both keep every scene.
std::pair<Dataset, Dataset> split_easy_hard(const Dataset& data, const EasyCriterion& easy);

std::string format_threshold(double t);

}  // namespace calico
