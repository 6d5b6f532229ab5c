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

#include "calico/op_calibrator.hpp"

#include "calico/errors.hpp"

namespace calico {

OpCalibrator OpCalibrator::create(ad::ParamStore& store, const Vocabulary& vocab,
                                  const CalibratorConfig& cfg,
                                  const ConceptStore& concepts, ad::Rng& rng) {
  if (cfg.type_dim <= 0 || cfg.attr_dim <= 0 || cfg.hidden <= 0 ||
      (!cfg.share_concepts && cfg.concept_dim <= 0)) {
    throw ConfigError("calibrator dimensions must be positive");
  }
  OpCalibrator c;
  c.cfg_ = cfg;
  c.num_attributes_ = vocab.num_attributes();
  c.num_concepts_ = vocab.num_concepts();
  c.type_table_ = store.add("opcal.type", ad::gaussian(kNumOpTypes, cfg.type_dim, 0.5, rng));
  c.attr_table_ = store.add(
      "opcal.attr",
      ad::gaussian(c.num_attributes_ + kNumRelTypes + 1, cfg.attr_dim, 0.5, rng));
  int concept_width = cfg.concept_dim;
  if (cfg.share_concepts) {
    concept_width = concepts.dim();
    c.cfg_.concept_dim = concept_width;
    c.shared_directions_ = concepts.directions();
    c.concept_table_ =
        store.add("opcal.concept_null", ad::gaussian(1, concept_width, 0.5, rng));
  } else {
    c.concept_table_ = store.add(
        "opcal.concept", ad::gaussian(c.num_concepts_ + 1, concept_width, 0.5, rng));
  }
  c.lstm_ = ad::BiLstm::create(store, "opcal.lstm",
                               cfg.type_dim + cfg.attr_dim + concept_width, cfg.hidden,
                               rng);
  c.head_ = ad::Linear::create(store, "opcal.head", 2 * cfg.hidden, 1, rng);
  return c;
}

OpCalibrator::Output OpCalibrator::predict(ad::Tape& tape, const ad::ParamStore& store,
                                           const Program& p) const {
  if (type_table_ < 0) throw ConfigError("calibrator is not initialized");
  const int m = p.size();
  std::vector<int> types, attrs, concept_rows;
  for (const OperationNode& n : p.nodes()) {
    types.push_back(static_cast<int>(n.type));
    if (n.attr) {
      attrs.push_back(*n.attr);
    } else if (n.rtype) {
      attrs.push_back(num_attributes_ + static_cast<int>(*n.rtype));
    } else {
      attrs.push_back(num_attributes_ + kNumRelTypes);
    }
    concept_rows.push_back(n.concept_id ? *n.concept_id : -1);
  }

  ad::Var et = ad::gather_rows(tape.param(store, type_table_), types);
  ad::Var ea = ad::gather_rows(tape.param(store, attr_table_), attrs);
  ad::Var ec;
  if (cfg_.share_concepts) {
    ad::Var dirs = tape.param(store, shared_directions_);
    ad::Var null_row = tape.param(store, concept_table_);
    std::vector<ad::Var> rows;
    for (int r : concept_rows) rows.push_back(r < 0 ? null_row : ad::slice_rows(dirs, r, 1));
    ec = ad::concat_rows(rows);
  } else {
    for (int& r : concept_rows) {
      if (r < 0) r = num_concepts_;
    }
    ec = ad::gather_rows(tape.param(store, concept_table_), concept_rows);
  }
  const ad::Var parts[] = {et, ea, ec};
  ad::Var e = ad::concat_cols(parts);

  std::vector<ad::Var> seq;
  seq.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) seq.push_back(ad::slice_rows(e, i, 1));
  const std::vector<ad::Var> h = lstm_.run(tape, store, seq);
  ad::Var logits = head_(tape, store, ad::concat_rows(h));
  return {logits, ad::sigmoid(logits)};
}

OpCalibrator::Values OpCalibrator::predict_values(const ad::ParamStore& store,
                                                  const Program& p) const {
  ad::Tape tape(false);
  const Output out = predict(tape, store, p);
  return {out.logits.value().data, out.weights.value().data};
}

}  // namespace calico
