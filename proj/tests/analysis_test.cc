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

#include "calico/analysis.hpp"

#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "calico/errors.hpp"
#include "calico/synth.hpp"

namespace calico {
namespace {

TEST(SpearmanTest, KnownValues) {
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 1e3, -2, -3}), -0.8);
  EXPECT_DOUBLE_EQ(spearman({1, 2, 3, 4}, {8, 6, 4, 2}), -1.0);
  // Ties take the average rank: x ranks 1, 2.5, 2.5, 4.
  EXPECT_NEAR(spearman({1, 2, 2, 3}, {1, 3, 2, 4}), 4.5 / std::sqrt(22.5), 1e-15);
  EXPECT_EQ(spearman({1, 1, 1}, {1, 2, 3}), 0.0);
  EXPECT_EQ(spearman({1}, {2}), 0.0);
  EXPECT_THROW(spearman({1, 2}, {1}), ShapeError);
}

TEST(SpearmanTest, InvariantUnderMonotoneMaps) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  std::vector<double> x(40), y(40), ex(40);
  for (int i = 0; i < 40; ++i) {
    x[i] = g(rng);
    y[i] = x[i] + g(rng);
    ex[i] = std::exp(3.0 * x[i]);
  }
  EXPECT_NEAR(spearman(x, y), spearman(ex, y), 1e-15);
  EXPECT_NEAR(spearman(x, y), spearman(y, x), 1e-15);
}

struct Fixture {
  Corpus corpus;
  Dataset data;
  Fixture() {
    CorpusConfig cc;
    cc.num_scenes = 60;
    cc.num_classes = 8;
    cc.seed = 2;
    corpus = generate(cc);
    std::mt19937_64 rng(1);
    std::vector<Scene> scenes;
    for (const GoldScene& g : corpus.scenes) {
      scenes.push_back(perceive(g, corpus.vocab, 3.0, 0.5, rng));
    }
    data = make_dataset(std::move(scenes), corpus.questions);
  }
};

ModelConfig small_model(CalibrationMode mode) {
  ModelConfig mc;
  mc.mode = mode;
  mc.dim = 6;
  mc.mapping_hidden = 6;
  mc.pair_hidden = 6;
  mc.calibrator.type_dim = 3;
  mc.calibrator.attr_dim = 3;
  mc.calibrator.concept_dim = 3;
  mc.calibrator.hidden = 3;
  return mc;
}

TEST(MagnitudeTableTest, CountsQueryAnswers) {
  const Fixture f;
  std::map<std::string, int> want;
  for (const Example& e : f.data.examples) {
    const std::string op(op_name(e.program.root().type));
    if (op == "query" || op == "query_rel_s" || op == "query_rel_o") ++want[e.answer];
  }
  ASSERT_FALSE(want.empty());
  Model m(f.corpus.vocab, small_model(CalibrationMode::kCalibrated));
  const auto rows = magnitude_table(m, f.data.examples);
  ASSERT_EQ(rows.size(), want.size());
  for (const MagnitudeRow& r : rows) {
    EXPECT_EQ(r.count, want[r.concept_name]) << r.concept_name;
    EXPECT_DOUBLE_EQ(r.log_count, std::log(r.count));
    EXPECT_EQ(r.magnitude, 1.0);
  }
}

TEST(MagnitudeTableTest, MagnitudeFollowsMode) {
  const Fixture f;
  const Vocabulary& v = f.corpus.vocab;
  Model cal(v, small_model(CalibrationMode::kCalibrated));
  ad::Tensor& mags = cal.params().value(cal.concepts().magnitudes());
  for (int c = 0; c < mags.cols; ++c) {
    mags(magnitude_row(OpType::kQuery), c) = 0.5 + c;
    mags(magnitude_row(OpType::kQueryRelS), c) = -1.0 - c;
  }
  for (const MagnitudeRow& r : magnitude_table(cal, f.data.examples)) {
    const ConceptId c = v.concept_id(r.concept_name);
    EXPECT_EQ(r.magnitude, v.concept_info(c).is_relation ? -1.0 - c : 0.5 + c);
  }
  Model un(v, small_model(CalibrationMode::kUnnormalized));
  const ad::Tensor& dirs = un.params().value(un.concepts().directions());
  for (const MagnitudeRow& r : magnitude_table(un, f.data.examples)) {
    const ConceptId c = v.concept_id(r.concept_name);
    double sq = 0.0;
    for (int k = 0; k < dirs.cols; ++k) sq += dirs(c, k) * dirs(c, k);
    EXPECT_NEAR(r.magnitude, std::sqrt(sq), 1e-15);
  }
  Model norm(v, small_model(CalibrationMode::kNormalized));
  for (const MagnitudeRow& r : magnitude_table(norm, f.data.examples)) {
    EXPECT_EQ(r.magnitude, 1.0);
  }
}

TEST(OperationWeightsTest, OneRecordPerNode) {
  const ModuleSuite s = module_suite();
  ModelConfig mc = small_model(CalibrationMode::kCalibrated);
  Model m(s.vocab, mc);
  for (const Program& p : s.programs) {
    const nlohmann::json nodes = operation_weights(m, p);
    ASSERT_EQ(nodes.size(), static_cast<std::size_t>(p.size()));
    const auto v = m.calibrator().predict_values(m.params(), p);
    const auto rem = removable_set(p);
    for (int i = 0; i < p.size(); ++i) {
      const auto& n = nodes[static_cast<std::size_t>(i)];
      EXPECT_EQ(n["index"], i);
      EXPECT_EQ(n["weight"], v.weights[static_cast<std::size_t>(i)]);
      EXPECT_EQ(n["logit"], v.logits[static_cast<std::size_t>(i)]);
      EXPECT_EQ(n["removable"], rem.count(i) > 0);
      EXPECT_EQ(n["op"].get<std::string>().rfind(op_name(p.node(i).type), 0), 0u);
    }
  }
}

}  // namespace
}  // namespace calico
