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

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "calico/concept_store.hpp"
#include "calico/nn.hpp"
#include "calico/op_calibrator.hpp"
#include "calico/program.hpp"
#include "calico/scene.hpp"
#include "calico/vocab.hpp"

namespace calico {

struct ModelConfig {
  int dim = 32;
  int mapping_hidden = 64;
  int pair_hidden = 64;
  int feature_dim = 0;  // 0: the vocabulary's symbolic layout
  CalibrationMode mode = CalibrationMode::kCalibrated;
  bool opcal = true;
  double tau = 1.0;               // attention temperature
  double binary_threshold = 0.0;  // "yes" iff score + bias > threshold
  bool binary_bias = true;        // learned offset per binary root op type (o shares s)
  CalibratorConfig calibrator;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Per-family object encoder: e = MLP(sigmoid(g) * v) + P(box-features).
struct MappingNetwork {
  ad::ParamId gate = -1;
  ad::Linear hidden;
  ad::Linear out;
  ad::Linear spatial;

  static MappingNetwork create(ad::ParamStore& store, const std::string& prefix,
                               int feature_dim, int hidden, int dim, ad::Rng& rng);
  // features: N x F, boxes: N x 8. Returns N x dim.
  ad::Var embed(ad::Tape& tape, const ad::ParamStore& store, ad::Var features,
                ad::Var boxes) const;
};

// Per-relation-type pair encoder over [v_s, v_o, pair-box-features].
struct PairNetwork {
  ad::Linear hidden;
  ad::Linear out;

  static PairNetwork create(ad::ParamStore& store, const std::string& prefix,
                            int input, int hidden, int dim, ad::Rng& rng);
  // features: N x F, pair_boxes: N^2 x 20 with row i * N + j for (i, j).
  // Returns N^2 x dim.
  ad::Var embed(ad::Tape& tape, const ad::ParamStore& store, ad::Var features,
                ad::Var pair_boxes) const;
};

// All learnable state plus the vocabulary it was built for.
class Model {
 public:
  Model(Vocabulary vocab, ModelConfig cfg);

  const Vocabulary& vocab() const { return vocab_; }
  const ModelConfig& config() const { return cfg_; }
  // Mode, opcal, tau and threshold may change after construction; sizes may not.
  ModelConfig& runtime_config() { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  const ConceptStore& concepts() const { return concepts_; }
  const MappingNetwork& mapping(AttrId a) const {
    return mapping_.at(static_cast<std::size_t>(a));
  }
  const PairNetwork& pair(RelType t) const {
    return pair_.at(static_cast<std::size_t>(t));
  }
  const OpCalibrator& calibrator() const { return calibrator_; }
  ad::ParamId same_offset() const { return same_offset_; }
  ad::ParamId binary_bias() const { return binary_bias_; }  // 1 x kNumOpTypes
  int feature_dim() const { return feature_dim_; }
  // Families answerable by `common`: every family except object names.
  const std::vector<AttrId>& common_families() const { return common_families_; }

  // Checkpoint with {"meta": {"config", "vocab"}}.
  void save(const std::string& path, nlohmann::json extra_meta = {}) const;
  static Model load(const std::string& path);

 private:
  Vocabulary vocab_;
  ModelConfig cfg_;
  int feature_dim_ = 0;
  ad::ParamStore params_;
  ConceptStore concepts_;
  std::vector<MappingNetwork> mapping_;
  std::vector<PairNetwork> pair_;
  OpCalibrator calibrator_;
  ad::ParamId same_offset_ = -1;
  ad::ParamId binary_bias_ = -1;
  std::vector<AttrId> common_families_;
};

struct ExecOptions {
  // Replace the weight applied to a node's output where its parent consumes
  // it. Applies with or without operation calibration.
  std::map<int, double> weight_overrides;
  // Multiply a node's own result (before merging) by a factor.
  std::map<int, double> result_scale;
  bool trace = false;
};

struct NodeTrace {
  int index = 0;
  std::string label;
  std::optional<double> weight;  // weight applied where the parent consumes it
  std::optional<double> logit;
  std::vector<std::vector<double>> inputs;  // weighted dependency inputs
  std::vector<double> result;               // own d_res, or answer scores
  std::vector<double> output;               // merged output
};

struct ExecResult {
  ad::Var scores;  // 1 x k answer scores (invalid after execute_eval)
  std::vector<double> score_values;
  // Binary roots: score plus the learned bias, compared with the threshold.
  ad::Var margin;
  double margin_value = 0.0;
  OutputKind kind = OutputKind::kBinary;
  // One label per score: candidate names (open), {"yes"} (binary), branch
  // answers (choose), family names (common).
  std::vector<std::string> labels;
  std::string answer;
  std::vector<NodeTrace> trace;
};

// Elementwise mean, or sum of w_j d_j when weights are given.
ad::Var merge(std::span<const ad::Var> ds,
              std::optional<std::span<const double>> weights = std::nullopt);

// att(d) = softmax(d / tau)
ad::Var attention(ad::Var d, double tau);

// Runs the program bottom-up over the scene on `tape`.
ExecResult execute(const Model& model, const Program& p, const Scene& scene,
                   ad::Tape& tape, const ExecOptions& opts = {});

// Convenience wrapper using an evaluation-only tape.
ExecResult execute_eval(const Model& model, const Program& p, const Scene& scene,
                        const ExecOptions& opts = {});

nlohmann::json trace_to_json(const ExecResult& r);

// Index of `answer` among the result labels; binary questions map "yes" to 1
// and "no" to 0. Throws UnknownAnswer.
int answer_target(const ExecResult& r, const std::string& answer);

}  // namespace calico
