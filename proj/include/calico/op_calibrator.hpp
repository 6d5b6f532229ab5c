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

#include <vector>

#include "calico/concept_store.hpp"
#include "calico/nn.hpp"
#include "calico/program.hpp"
#include "calico/vocab.hpp"

namespace calico {

struct CalibratorConfig {
  int type_dim = 16;
  int attr_dim = 16;
  int concept_dim = 16;
  int hidden = 32;  // per direction
  // Reuse the executor's concept directions instead of a dedicated table.
  bool share_concepts = false;
};

// Predicts one weight per program node from its pre-order linearization:
// e_i = [type; attribute-or-relation-type; concept], h = BiLSTM(e),
// logit_i = W h_i + b, weight_i = sigmoid(logit_i). Missing arguments use
// learned null rows.
class OpCalibrator {
 public:
  OpCalibrator() = default;
  static OpCalibrator create(ad::ParamStore& store, const Vocabulary& vocab,
                             const CalibratorConfig& cfg,
                             const ConceptStore& concepts, ad::Rng& rng);

  struct Output {
    ad::Var logits;   // m x 1
    ad::Var weights;  // m x 1
  };
  Output predict(ad::Tape& tape, const ad::ParamStore& store,
                 const Program& p) const;

  struct Values {
    std::vector<double> logits;
    std::vector<double> weights;
  };
  Values predict_values(const ad::ParamStore& store, const Program& p) const;

  const CalibratorConfig& config() const { return cfg_; }
  ad::ParamId type_table() const { return type_table_; }
  ad::ParamId attr_table() const { return attr_table_; }
  ad::ParamId concept_table() const { return concept_table_; }
  const ad::BiLstm& lstm() const { return lstm_; }
  const ad::Linear& head() const { return head_; }

 private:
  CalibratorConfig cfg_;
  int num_attributes_ = 0;
  int num_concepts_ = 0;
  ad::ParamId type_table_ = -1;
  ad::ParamId attr_table_ = -1;     // attributes, then relation types, then null
  ad::ParamId concept_table_ = -1;  // concepts then null, or null only when shared
  ad::ParamId shared_directions_ = -1;
  ad::BiLstm lstm_;
  ad::Linear head_;
};

}  // namespace calico
