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

#include "calico/scene.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "calico/errors.hpp"
#include "calico/synth.hpp"

namespace calico {
namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

TEST(SceneTest, BoxFeatures) {
  const auto f = box_features({0.1, 0.2, 0.5, 0.6});
  EXPECT_DOUBLE_EQ(f[4], 0.4);
  EXPECT_DOUBLE_EQ(f[5], 0.4);
  EXPECT_DOUBLE_EQ(f[6], 0.3);
  EXPECT_DOUBLE_EQ(f[7], 0.4);
}

TEST(SceneTest, PairFeaturesAreAntisymmetric) {
  const Box a{0.1, 0.2, 0.3, 0.7}, b{0.5, 0.1, 0.9, 0.4};
  const auto ab = pair_box_features(a, b);
  const auto ba = pair_box_features(b, a);
  for (int k = 16; k < kPairBoxFeatureDim; ++k) EXPECT_DOUBLE_EQ(ab[k], -ba[k]);
  for (int k = 0; k < kBoxFeatureDim; ++k) EXPECT_EQ(ab[k], ba[k + kBoxFeatureDim]);
  EXPECT_LT(ab[16], 0.0);  // a is left of b
  const auto self = pair_box_features(a, a);
  for (int k = 16; k < kPairBoxFeatureDim; ++k) EXPECT_EQ(self[k], 0.0);
}

TEST(SceneTest, GoldFeaturesFollowVocabularyLayout) {
  const ModuleSuite m = module_suite();
  const Scene s = gold_to_features(m.scene, m.vocab);
  ASSERT_EQ(s.size(), m.scene.size());
  EXPECT_EQ(s.score_kind, "gold");
  for (int i = 0; i < s.size(); ++i) {
    const GoldObject& g = m.scene.objects[static_cast<std::size_t>(i)];
    std::vector<double> want(static_cast<std::size_t>(m.vocab.feature_dim()), 0.0);
    want[static_cast<std::size_t>(m.vocab.feature_index(m.vocab.concept_id(g.cls)))] = 1.0;
    for (const auto& [family, values] : g.attributes) {
      for (const auto& v : values) {
        want[static_cast<std::size_t>(m.vocab.feature_index(m.vocab.concept_id(v)))] = 1.0;
      }
    }
    EXPECT_EQ(s.objects[static_cast<std::size_t>(i)].features, want);
    EXPECT_EQ(s.objects[static_cast<std::size_t>(i)].box, g.box);
  }
}

TEST(SceneTest, ObjectWithoutAttributesHasEmptyAttributeBlock) {
  const Fig2Fixture f = adversarial_scene_fig2();
  const Scene s = gold_to_features(f.scene, f.vocab);
  const auto& girl = s.objects[0].features;
  const int first_attr = f.vocab.num_classes();
  for (int k = first_attr; k < f.vocab.feature_dim(); ++k) EXPECT_EQ(girl[k], 0.0);
}

TEST(SceneTest, GoldFeaturesRejectUnknownConcepts) {
  const Fig2Fixture f = adversarial_scene_fig2();
  GoldScene g = f.scene;
  g.objects[0].cls = "black";
  EXPECT_THROW(gold_to_features(g, f.vocab), UnknownSymbol);
  g = f.scene;
  g.objects[0].attributes["color"] = {"bag"};
  EXPECT_THROW(gold_to_features(g, f.vocab), UnknownSymbol);
  g = f.scene;
  g.objects[0].cls = "zebra";
  EXPECT_THROW(gold_to_features(g, f.vocab), UnknownSymbol);
}

TEST(SceneTest, JsonRoundTripIsLossless) {
  const ModuleSuite m = module_suite();
  std::mt19937_64 rng(1);
  const Scene s = perceive(m.scene, m.vocab, 2.0, 0.5, rng);
  const Scene back = scene_from_json(nlohmann::json::parse(scene_to_json(s).dump()));
  EXPECT_EQ(back.id, s.id);
  EXPECT_EQ(back.score_kind, s.score_kind);
  ASSERT_EQ(back.size(), s.size());
  for (int i = 0; i < s.size(); ++i) {
    EXPECT_EQ(back.objects[static_cast<std::size_t>(i)].features,
              s.objects[static_cast<std::size_t>(i)].features);
    EXPECT_EQ(back.objects[static_cast<std::size_t>(i)].box,
              s.objects[static_cast<std::size_t>(i)].box);
  }
  const GoldScene g = gold_scene_from_json(gold_scene_to_json(m.scene));
  EXPECT_EQ(gold_scene_to_json(g), gold_scene_to_json(m.scene));
}

TEST(SceneTest, PixelBoxesAreNormalized) {
  const nlohmann::json j = {
      {"id", "p"},
      {"width", 200},
      {"height", 100},
      {"objects", {{{"box", {20, 10, 100, 50}}, {"features", {0.5, 0.5}}}}}};
  const Scene s = scene_from_json(j);
  EXPECT_EQ(s.objects[0].box, (Box{0.1, 0.1, 0.5, 0.5}));
}

TEST(SceneTest, ValidationErrors) {
  auto bad = [](nlohmann::json j) { EXPECT_THROW(scene_from_json(j), SchemaError) << j; };
  bad({{"id", "x"}, {"objects", nlohmann::json::array()}});
  bad({{"id", "x"}, {"objects", {{{"box", {0, 0, 2, 1}}, {"features", {1.0}}}}}});
  bad({{"id", "x"}, {"objects", {{{"box", {0.5, 0, 0.2, 1}}, {"features", {1.0}}}}}});
  bad({{"id", "x"},
       {"objects",
        {{{"box", {0, 0, 1, 1}}, {"features", {1.0}}},
         {{"box", {0, 0, 1, 1}}, {"features", {1.0, 2.0}}}}}});
  bad({{"id", "x"}, {"objects", {{{"box", {0, 0, 1}}, {"features", {1.0}}}}}});
  bad({{"objects", {{{"box", {0, 0, 1, 1}}, {"features", {1.0}}}}}});
  bad({{"id", "x"}, {"width", 0}, {"objects", {{{"box", {0, 0, 1, 1}}, {"features", {1.0}}}}}});
  GoldScene g = module_suite().scene;
  g.relations.push_back({0, 99, "left_of"});
  EXPECT_THROW(validate_gold_scene(g), SchemaError);
}

TEST(SceneTest, ReaderStreamsFilesAndReportsLines) {
  const ModuleSuite m = module_suite();
  const std::string gold = temp_path("calico_scene_gold.jsonl");
  write_gold_scenes(gold, {m.scene, m.scene});
  const auto scenes = load_scenes(gold, SceneFormat::kGold, &m.vocab);
  ASSERT_EQ(scenes.size(), 2u);
  EXPECT_EQ(scenes[1].objects[2].features, gold_to_features(m.scene, m.vocab).objects[2].features);
  EXPECT_THROW(SceneReader(gold, SceneFormat::kGold), ConfigError);
  EXPECT_EQ(load_gold_scenes(gold).size(), 2u);
  std::remove(gold.c_str());

  const std::string scores = temp_path("calico_scene_scores.jsonl");
  write_scenes(scores, scenes);
  EXPECT_EQ(load_scenes(scores, SceneFormat::kScores).size(), 2u);
  {
    std::ofstream out(scores, std::ios::app);
    out << "\n{not json}\n";
  }
  try {
    load_scenes(scores, SceneFormat::kScores);
    ADD_FAILURE() << "expected a SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find(":4:"), std::string::npos) << e.what();
  }
  std::remove(scores.c_str());
  EXPECT_THROW(SceneReader("/nonexistent/calico.jsonl", SceneFormat::kScores), IoError);
}

}  // namespace
}  // namespace calico
