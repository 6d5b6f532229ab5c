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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "calico/errors.hpp"
#include "calico/executor.hpp"
#include "calico/synth.hpp"
#include "calico/trainer.hpp"

namespace calico {
namespace {

CalibratorConfig small() {
  CalibratorConfig c;
  c.type_dim = 3;
  c.attr_dim = 3;
  c.concept_dim = 4;
  c.hidden = 5;
  return c;
}

struct Fixture {
  ModuleSuite suite = module_suite();
  ad::ParamStore store;
  ConceptStore concepts;
  OpCalibrator cal;
  explicit Fixture(CalibratorConfig cfg = small()) {
    ad::Rng rng(4);
    concepts = ConceptStore::create(store, suite.vocab.num_concepts(), 6, rng);
    cal = OpCalibrator::create(store, suite.vocab, cfg, concepts, rng);
  }
};

TEST(OpCalibratorTest, OneSigmoidWeightPerNode) {
  Fixture f;
  for (const Program& p : f.suite.programs) {
    const auto v = f.cal.predict_values(f.store, p);
    ASSERT_EQ(v.logits.size(), static_cast<std::size_t>(p.size()));
    ASSERT_EQ(v.weights.size(), v.logits.size());
    for (std::size_t i = 0; i < v.logits.size(); ++i) {
      EXPECT_NEAR(v.weights[i], 1.0 / (1.0 + std::exp(-v.logits[i])), 1e-15);
      EXPECT_GT(v.weights[i], 0.0);
      EXPECT_LT(v.weights[i], 1.0);
    }
  }
}

TEST(OpCalibratorTest, ZeroHeadGivesHalfWeights) {
  Fixture f;
  for (double& x : f.store.value(f.cal.head().weight).data) x = 0.0;
  for (double& x : f.store.value(f.cal.head().bias).data) x = 0.0;
  for (const Program& p : f.suite.programs) {
    for (double w : f.cal.predict_values(f.store, p).weights) EXPECT_EQ(w, 0.5);
  }
}

TEST(OpCalibratorTest, WeightsDependOnContext) {
  Fixture f;
  const Vocabulary& v = f.suite.vocab;
  const auto a = f.cal.predict_values(f.store, parse_program("exist(select[name](bag))", v));
  const auto b = f.cal.predict_values(
      f.store, parse_program("exist(filter[color](black; select[name](bag)))", v));
  // The select node sees different neighbours in the two programs.
  EXPECT_NE(a.logits[1], b.logits[2]);
  // Same program, same weights.
  const auto c = f.cal.predict_values(f.store, parse_program("exist(select[name](bag))", v));
  EXPECT_EQ(a.logits, c.logits);
}

TEST(OpCalibratorTest, SharedConceptTableFollowsDirections) {
  CalibratorConfig cfg = small();
  cfg.share_concepts = true;
  Fixture f(cfg);
  EXPECT_EQ(f.cal.config().concept_dim, f.concepts.dim());
  EXPECT_TRUE(f.store.contains("opcal.concept_null"));
  EXPECT_FALSE(f.store.contains("opcal.concept"));
  const Program p = parse_program("exist(select[name](bag))", f.suite.vocab);
  const auto before = f.cal.predict_values(f.store, p);
  ad::Tensor& dirs = f.store.value(f.concepts.directions());
  const ConceptId bag = f.suite.vocab.concept_id("bag");
  for (int k = 0; k < dirs.cols; ++k) dirs(bag, k) += 0.5;
  EXPECT_NE(f.cal.predict_values(f.store, p).logits, before.logits);
}

TEST(OpCalibratorTest, RejectsBadConfig) {
  CalibratorConfig cfg = small();
  cfg.hidden = 0;
  EXPECT_THROW(Fixture{cfg}, ConfigError);
  OpCalibrator empty;
  ad::ParamStore store;
  ad::Tape tape(false);
  const ModuleSuite s = module_suite();
  EXPECT_THROW(empty.predict(tape, store, s.programs[0]), ConfigError);
}

// Training signal reaches every calibrator table through the merge weights.
TEST(OpCalibratorTest, AnswerLossReachesCalibratorParameters) {
  const ModuleSuite s = module_suite();
  ModelConfig mc;
  mc.dim = 8;
  mc.mapping_hidden = 8;
  mc.pair_hidden = 8;
  mc.calibrator = small();
  Model model(s.vocab, mc);
  std::mt19937_64 rng(2);
  const Scene scene = perceive(s.scene, s.vocab, 2.0, 0.5, rng);
  Dataset d;
  d.scenes = {scene};
  const Program p = parse_program("exist(filter[color](red; select[name](cup)))", s.vocab);
  d.examples.push_back({"q", 0, p, "yes", "exist", false});
  ad::GradStore grads(model.params());
  batch_gradient(model, d, {0}, grads);
  const OpCalibrator& cal = model.calibrator();
  for (ad::ParamId id : {cal.type_table(), cal.attr_table(), cal.concept_table(),
                         cal.head().weight, cal.lstm().forward.weight,
                         cal.lstm().backward.weight}) {
    double n = 0.0;
    for (double g : grads[id].data) n += g * g;
    EXPECT_GT(n, 0.0) << model.params().name(id);
  }
}

}  // namespace
}  // namespace calico
