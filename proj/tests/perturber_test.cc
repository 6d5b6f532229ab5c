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

#include "calico/perturber.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "calico/errors.hpp"
#include "calico/synth.hpp"

namespace calico {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ModelConfig small_model(bool opcal = true) {
  ModelConfig mc;
  mc.dim = 8;
  mc.mapping_hidden = 8;
  mc.pair_hidden = 8;
  mc.calibrator.type_dim = 3;
  mc.calibrator.attr_dim = 3;
  mc.calibrator.concept_dim = 3;
  mc.calibrator.hidden = 4;
  mc.opcal = opcal;
  mc.seed = 6;
  return mc;
}

struct Data {
  Vocabulary vocab;
  Dataset all;
};

const Data& data() {
  static const Data d = [] {
    CorpusConfig cc;
    cc.num_scenes = 40;
    cc.questions_per_scene = 5;
    cc.num_classes = 6;
    cc.overspec = 0.9;
    cc.seed = 12;
    Corpus c = generate(cc);
    std::mt19937_64 rng(3);
    std::vector<Scene> scenes;
    for (const GoldScene& g : c.scenes) scenes.push_back(perceive(g, c.vocab, 3.0, 0.5, rng));
    return Data{c.vocab, make_dataset(std::move(scenes), c.questions)};
  }();
  return d;
}

// Removable nodes of `p` whose logit is below t.
int below_count(const Model& m, const Program& p, double t) {
  const auto v = m.calibrator().predict_values(m.params(), p);
  int n = 0;
  for (int i : removable_set(p)) n += v.logits[static_cast<std::size_t>(i)] < t;
  return n;
}

TEST(PerturberTest, InfiniteThresholdsAreIdentityAndFullRemoval) {
  const Data& d = data();
  Model m(d.vocab, small_model());
  for (const Example& ex : d.all.examples) {
    const PerturbedProgram lo = perturb_program(m, ex.program, -kInf);
    EXPECT_EQ(lo.program, ex.program);
    EXPECT_EQ(lo.removed, 0);
    const PerturbedProgram hi = perturb_program(m, ex.program, kInf);
    EXPECT_EQ(hi.removed, hi.removable);
    EXPECT_TRUE(removable_set(hi.program).empty());
    // Relate removal also drops its second subtree.
    EXPECT_LE(hi.program.size(), ex.program.size() - hi.removable);
  }
}

TEST(PerturberTest, OneShotRemovesExactlyTheNodesBelowThreshold) {
  const Data& d = data();
  Model m(d.vocab, small_model());
  int total = 0;
  for (const Example& ex : d.all.examples) {
    for (double t : {-1.0, -0.2, 0.0, 0.3}) {
      const PerturbedProgram pp = perturb_program(m, ex.program, t);
      const int want = below_count(m, ex.program, t);
      EXPECT_EQ(pp.removed, want);
      EXPECT_LE(pp.program.size(), ex.program.size() - want);
      total += want;
    }
  }
  EXPECT_GT(total, 0);
}

TEST(PerturberTest, RemovalGrowsWithThreshold) {
  const Data& d = data();
  Model m(d.vocab, small_model());
  const std::vector<double> ts = {-kInf, -2.0, -0.5, 0.0, 0.5, 2.0, kInf};
  const auto sets = perturb_set(m, d.all, ts);
  ASSERT_EQ(sets.size(), ts.size());
  for (std::size_t k = 1; k < sets.size(); ++k) {
    EXPECT_GE(sets[k].removed, sets[k - 1].removed);
    EXPECT_GE(sets[k].modified, sets[k - 1].modified);
    EXPECT_EQ(sets[k].removable, sets[0].removable);
  }
  EXPECT_EQ(sets.front().removed, 0);
  EXPECT_EQ(sets.back().removed, sets.back().removable);
  for (std::size_t i = 0; i < d.all.examples.size(); ++i) {
    EXPECT_EQ(sets[2].data.examples[i].answer, d.all.examples[i].answer);
    EXPECT_EQ(sets[2].data.examples[i].scene, d.all.examples[i].scene);
  }
}

TEST(PerturberTest, IterativeReachesFixpoint) {
  const Data& d = data();
  Model m(d.vocab, small_model());
  for (const Example& ex : d.all.examples) {
    const PerturbedProgram once = perturb_program(m, ex.program, 0.0);
    const PerturbedProgram it = perturb_program(m, ex.program, 0.0, true);
    EXPECT_GE(it.removed, once.removed);
    EXPECT_EQ(below_count(m, it.program, 0.0), 0);
  }
}

TEST(PerturberTest, NeedsOperationCalibration) {
  const Data& d = data();
  Model m(d.vocab, small_model(false));
  EXPECT_THROW(perturb_set(m, d.all, default_thresholds()), ConfigError);
}

TEST(PerturberTest, CurveRowsAndCsv) {
  const Data& d = data();
  Model m(d.vocab, small_model());
  const PerturbReport rep = curve(m, d.all, {-kInf, 0.0, kInf});
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[0].delta, 0.0);
  EXPECT_EQ(rep.rows[0].frac_removed, 0.0);
  EXPECT_EQ(rep.rows[2].frac_removed, 1.0);
  for (const PerturbRow& r : rep.rows) {
    EXPECT_DOUBLE_EQ(r.delta, r.accuracy - rep.original_accuracy);
  }
  std::istringstream csv(rep.to_csv());
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "threshold,frac_removed,frac_questions_modified,accuracy,delta");
  std::getline(csv, line);
  EXPECT_EQ(line.rfind("-inf,0,0,", 0), 0u) << line;
  int n = 1;
  while (std::getline(csv, line)) ++n;
  EXPECT_EQ(n, 3);
  const nlohmann::json j = rep.to_json();
  EXPECT_EQ(j["rows"][2]["threshold"], "inf");
  EXPECT_EQ(j["rows"][1]["threshold"], 0.0);
}

TEST(PerturberTest, EasyHardSplitPartitionsQuestions) {
  const Data& d = data();
  Model m(d.vocab, small_model());
  const auto [easy, hard] = split_easy_hard(d.all, unit_weight_criterion(m));
  EXPECT_EQ(easy.size() + hard.size(), d.all.size());
  EXPECT_EQ(easy.scenes.size(), d.all.scenes.size());
  // The criterion does not touch the model it was built from.
  EXPECT_EQ(m.config().opcal, true);
  const auto again = split_easy_hard(d.all, [](const Example&, const Scene&) { return true; });
  EXPECT_EQ(again.first.size(), d.all.size());
  EXPECT_EQ(again.second.size(), 0);
}

TEST(PerturberTest, FormatThreshold) {
  EXPECT_EQ(format_threshold(-kInf), "-inf");
  EXPECT_EQ(format_threshold(kInf), "inf");
  EXPECT_EQ(format_threshold(-0.5), "-0.5");
}

}  // namespace
}  // namespace calico
