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

#include "calico/synth.hpp"

#include <cstdio>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/special_functions/gamma.hpp>
#include <gtest/gtest.h>

#include "calico/errors.hpp"

namespace calico {
namespace {

CorpusConfig small_config(int scenes, double overspec, std::uint64_t seed = 7) {
  CorpusConfig c;
  c.num_scenes = scenes;
  c.questions_per_scene = 4;
  c.overspec = overspec;
  c.seed = seed;
  return c;
}

const Corpus& shared_corpus() {
  static const Corpus c = generate(small_config(500, 0.5));
  return c;
}

const GoldScene& scene_of(const Corpus& c, const std::string& id) {
  for (const GoldScene& g : c.scenes) {
    if (g.id == id) return g;
  }
  throw std::runtime_error("missing scene " + id);
}

TEST(SynthTest, ZipfWeights) {
  const auto w = zipf_weights(5, 1.0);
  double total = 0;
  for (double x : w) total += x;
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(w[0] / w[3], 4.0, 1e-12);
  const auto u = zipf_weights(4, 0.0);
  for (double x : u) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(SynthTest, VocabularyLayout) {
  CorpusConfig c;
  c.num_classes = 30;
  c.families = {{"color", 3}, {"texture", 2}};
  const Vocabulary v = synth_vocabulary(c);
  EXPECT_EQ(v.num_attributes(), 3);
  EXPECT_EQ(v.num_classes(), 30);
  EXPECT_EQ(v.concept_name(v.candidates(v.class_attribute())[0]), "bag");
  EXPECT_EQ(v.concept_name(v.candidates(v.attribute_id("texture"))[1]), "texture_1");
  for (int t = 0; t < kNumRelTypes; ++t) {
    EXPECT_EQ(v.relations(static_cast<RelType>(t)).size(), 2u);
  }
}

TEST(SynthTest, ConfigValidation) {
  CorpusConfig c;
  c.overspec = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = CorpusConfig{};
  c.template_weights["nonsense"] = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = CorpusConfig{};
  c.families = {{"name", 3}};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SynthTest, Deterministic) {
  const Corpus a = generate(small_config(40, 0.5, 3));
  const Corpus b = generate(small_config(40, 0.5, 3));
  const Corpus c = generate(small_config(40, 0.5, 4));
  ASSERT_EQ(a.questions.size(), b.questions.size());
  for (std::size_t i = 0; i < a.questions.size(); ++i) {
    EXPECT_EQ(question_to_json(a.questions[i], a.vocab), question_to_json(b.questions[i], b.vocab));
  }
  bool differs = a.questions.size() != c.questions.size();
  for (std::size_t i = 0; !differs && i < a.questions.size(); ++i) {
    differs = a.questions[i].answer != c.questions[i].answer ||
              !(a.questions[i].program == c.questions[i].program);
  }
  EXPECT_TRUE(differs);
}

TEST(SynthTest, AnswersMatchOracleAndAreDefinite) {
  const Corpus& c = shared_corpus();
  EXPECT_GT(c.questions.size(), 1900u);
  for (const Question& q : c.questions) {
    const std::string a = oracle_answer(scene_of(c, q.scene_id), q.program, c.vocab);
    EXPECT_EQ(a, q.answer) << serialize_program(q.program, c.vocab);
    EXPECT_NE(a, "none");
    EXPECT_NE(a, "ambiguous");
  }
}

TEST(SynthTest, EveryModuleInEveryBlock) {
  const Corpus& c = shared_corpus();
  for (std::size_t start = 0; start + 200 <= c.questions.size(); start += 200) {
    std::set<OpType> seen;
    for (std::size_t i = start; i < start + 200; ++i) {
      for (const OperationNode& n : c.questions[i].program.nodes()) seen.insert(n.type);
    }
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(kNumOpTypes)) << "block at " << start;
  }
}

TEST(SynthTest, BinaryAnswersBalanced) {
  const Corpus& c = shared_corpus();
  int yes = 0, total = 0;
  for (const Question& q : c.questions) {
    if (q.answer == "yes" || q.answer == "no") {
      ++total;
      yes += q.answer == "yes";
    }
  }
  ASSERT_GT(total, 500);
  EXPECT_NEAR(static_cast<double>(yes) / total, 0.5, 0.05);
}

TEST(SynthTest, TemplateMixFollowsWeights) {
  const Corpus& c = shared_corpus();
  std::map<std::string, int> n;
  for (const Question& q : c.questions) ++n[q.tmpl];
  for (const std::string& t : template_names()) EXPECT_GT(n[t], 0) << t;
  EXPECT_GT(n["query"], n["common"]);
}

// Redundancy is checked by replaying the oracle on every single-node
// removal.
void check_redundancy(double rho, bool expect_redundant) {
  const Corpus c = generate(small_config(150, rho, 11));
  ASSERT_FALSE(c.questions.empty());
  for (const Question& q : c.questions) {
    EXPECT_EQ(q.overspecified, expect_redundant);
    const GoldScene& g = scene_of(c, q.scene_id);
    const auto rem = removable_set(q.program);
    if (expect_redundant) EXPECT_FALSE(rem.empty());
    for (int i : rem) {
      const bool same = oracle_answer(g, remove_node(q.program, i), c.vocab) == q.answer;
      EXPECT_EQ(same, expect_redundant) << serialize_program(q.program, c.vocab) << " @" << i;
    }
  }
}

TEST(SynthTest, FullOverspecificationIsRedundant) { check_redundancy(1.0, true); }
TEST(SynthTest, NoOverspecificationIsEssential) { check_redundancy(0.0, false); }

TEST(SynthTest, ClassFrequenciesFollowZipf) {
  CorpusConfig cfg = small_config(600, 0.5, 5);
  cfg.questions_per_scene = 0;
  cfg.num_classes = 8;
  const Corpus c = generate(cfg);
  std::map<std::string, int> counts;
  int total = 0;
  for (const GoldScene& g : c.scenes) {
    for (const GoldObject& o : g.objects) {
      ++counts[o.cls];
      ++total;
    }
  }
  const auto w = zipf_weights(8, cfg.zipf);
  const auto& names = c.vocab.candidates(c.vocab.class_attribute());
  double chi2 = 0;
  for (int k = 0; k < 8; ++k) {
    const double expected = w[static_cast<std::size_t>(k)] * total;
    const double d = counts[c.vocab.concept_name(names[static_cast<std::size_t>(k)])] - expected;
    chi2 += d * d / expected;
  }
  const double p = boost::math::gamma_q(3.5, chi2 / 2.0);  // 7 degrees of freedom
  EXPECT_GT(p, 0.001) << "chi2=" << chi2;
}

TEST(SynthTest, GeometryIsConsistent) {
  const Corpus& c = shared_corpus();
  const std::map<std::string, std::string> inverse = {
      {"left_of", "right_of"}, {"right_of", "left_of"},     {"above", "below"},
      {"below", "above"},      {"bigger_than", "smaller_than"}, {"smaller_than", "bigger_than"}};
  for (std::size_t s = 0; s < 50; ++s) {
    const GoldScene& g = c.scenes[s];
    EXPECT_TRUE(boxes_well_separated(g.objects));
    std::set<std::tuple<int, int, std::string>> rels;
    for (const GoldRelation& r : g.relations) rels.insert({r.s, r.o, r.rel});
    const int n = g.size();
    EXPECT_EQ(rels.size(), static_cast<std::size_t>(3 * n * (n - 1)));
    for (const auto& [s_, o_, r] : rels) {
      EXPECT_TRUE(rels.count({o_, s_, inverse.at(r)}));
      const Box& a = g.objects[static_cast<std::size_t>(s_)].box;
      const Box& b = g.objects[static_cast<std::size_t>(o_)].box;
      if (r == "left_of") EXPECT_LT(a[0] + a[2], b[0] + b[2]);
      if (r == "above") EXPECT_LT(a[1] + a[3], b[1] + b[3]);
      if (r == "bigger_than") {
        EXPECT_GT((a[2] - a[0]) * (a[3] - a[1]), (b[2] - b[0]) * (b[3] - b[1]));
      }
    }
    for (const GoldObject& o : g.objects) {
      EXPECT_GE(o.box[2] - o.box[0], 0.08);
      EXPECT_LE(o.box[2] - o.box[0], 0.4);
    }
  }
}

GoldScene hand_scene() {
  GoldScene g;
  g.id = "hand";
  auto obj = [](Box b, std::string cls, std::string color, std::string material) {
    GoldObject o;
    o.box = b;
    o.cls = std::move(cls);
    o.attributes["color"] = {std::move(color)};
    o.attributes["material"] = {std::move(material)};
    return o;
  };
  g.objects = {obj({0.05, 0.05, 0.25, 0.30}, "cup", "red", "metal"),
               obj({0.40, 0.50, 0.60, 0.95}, "cup", "blue", "metal"),
               obj({0.70, 0.10, 0.95, 0.45}, "girl", "red", "wood")};
  g.relations = geometric_relations(g.objects);
  return g;
}

TEST(SynthTest, OracleOnHandScene) {
  CorpusConfig cfg;
  cfg.families = {{"color", 4}, {"material", 3}};
  const Vocabulary v = synth_vocabulary(cfg);
  const GoldScene g = hand_scene();
  auto ask = [&](const char* s) { return oracle_answer(g, parse_program(s, v), v); };
  EXPECT_EQ(ask("exist(select[name](cup))"), "yes");
  EXPECT_EQ(ask("exist(select[name](bag))"), "no");
  EXPECT_EQ(ask("query[color](select[name](cup))"), "ambiguous");
  EXPECT_EQ(ask("query[color](select[name](bag))"), "none");
  EXPECT_EQ(ask("query[color](filter[material](metal; select[name](cup)))"), "ambiguous");
  EXPECT_EQ(ask("query[color](filter[color](red, neg; select[name](cup)))"), "blue");
  EXPECT_EQ(ask("query[color](relate_o(left_of; select[name](cup), select[name](girl)))"),
            "ambiguous");
  EXPECT_EQ(ask("query[color](relate_o(above; select[name](cup), select[name](girl)))"), "red");
  EXPECT_EQ(ask("query[color](relate_s(right_of; select[name](cup), select[name](girl)))"),
            "ambiguous");
  EXPECT_EQ(ask("query[material](relate_ae[color](select[name](cup), select[name](girl)))"),
            "metal");
  EXPECT_EQ(ask("same[material](select[name](cup))"), "yes");
  EXPECT_EQ(ask("same[color](select[name](cup))"), "no");
  EXPECT_EQ(ask("query_rel_s[spatial](filter[color](blue; select[name](cup)), select[name](girl))"),
            "left_of");
  EXPECT_EQ(ask("query_rel_o[spatial](filter[color](blue; select[name](cup)), select[name](girl))"),
            "right_of");
  EXPECT_EQ(ask("verify_rel_o(below; filter[color](red; select[name](cup)), "
                "filter[color](blue; select[name](cup)))"),
            "yes");
  EXPECT_EQ(ask("query_ae[color](filter[color](red; select[name](cup)), select[name](girl))"),
            "yes");
  EXPECT_EQ(ask("common(filter[color](red; select[name](cup)), select[name](girl))"), "color");
  EXPECT_EQ(ask("common(filter[color](blue; select[name](cup)), select[name](girl))"),
            "ambiguous");
  EXPECT_EQ(ask("choose[material](wood; select[name](cup), select[name](girl))"), "girl");
  EXPECT_EQ(ask("verify[material](metal; select[name](cup))"), "yes");
  EXPECT_EQ(ask("verify[color](red; select[name](cup))"), "ambiguous");
  EXPECT_EQ(ask("union(exist(select[name](bag)), exist(select[name](girl)))"), "yes");
  EXPECT_EQ(ask("intersect(exist(select[name](bag)), exist(select[name](girl)))"), "no");
}

TEST(SynthTest, QuestionJsonRoundTrip) {
  const Corpus& c = shared_corpus();
  const std::string path = ::testing::TempDir() + "/questions.jsonl";
  std::vector<Question> head(c.questions.begin(), c.questions.begin() + 50);
  write_questions(path, head, c.vocab);
  const auto back = load_questions(path, c.vocab);
  ASSERT_EQ(back.size(), head.size());
  for (std::size_t i = 0; i < head.size(); ++i) {
    EXPECT_EQ(back[i].program, head[i].program);
    EXPECT_EQ(back[i].answer, head[i].answer);
    EXPECT_EQ(back[i].scene_id, head[i].scene_id);
    EXPECT_EQ(back[i].tmpl, head[i].tmpl);
    EXPECT_EQ(back[i].overspecified, head[i].overspecified);
  }
  nlohmann::json j = question_to_json(head[0], c.vocab);
  j["program"] = serialize_program(head[0].program, c.vocab);
  EXPECT_EQ(question_from_json(j, c.vocab).program, head[0].program);
  j.erase("answer");
  EXPECT_THROW(question_from_json(j, c.vocab), SchemaError);
  std::remove(path.c_str());
}

TEST(SynthTest, PerceiveIsNormalizedPerBlock) {
  const Corpus& c = shared_corpus();
  std::mt19937_64 rng(1);
  const GoldScene& g = c.scenes[0];
  const Scene clean = perceive(g, c.vocab, 20.0, 0.0, rng);
  const Scene noisy = perceive(g, c.vocab, 2.0, 1.0, rng);
  for (std::size_t i = 0; i < g.objects.size(); ++i) {
    for (AttrId a = 0; a < c.vocab.num_attributes(); ++a) {
      double t1 = 0, t2 = 0;
      for (ConceptId k : c.vocab.candidates(a)) {
        const int idx = c.vocab.feature_index(k);
        t1 += clean.objects[i].features[static_cast<std::size_t>(idx)];
        t2 += noisy.objects[i].features[static_cast<std::size_t>(idx)];
      }
      EXPECT_NEAR(t1, 1.0, 1e-9);
      EXPECT_NEAR(t2, 1.0, 1e-9);
    }
    const int cls = c.vocab.feature_index(c.vocab.concept_id(g.objects[i].cls));
    EXPECT_GT(clean.objects[i].features[static_cast<std::size_t>(cls)], 0.99);
    EXPECT_EQ(clean.objects[i].box, noisy.objects[i].box);
  }
}

TEST(SynthTest, OracleInvariantUnderObjectReordering) {
  const Corpus& c = shared_corpus();
  std::mt19937_64 rng(9);
  for (std::size_t k = 0; k < 500; ++k) {
    const Question& q = c.questions[k];
    const GoldScene& g = scene_of(c, q.scene_id);
    std::vector<int> perm(static_cast<std::size_t>(g.size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    GoldScene h = g;
    for (int i = 0; i < g.size(); ++i) {
      h.objects[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] =
          g.objects[static_cast<std::size_t>(i)];
    }
    for (GoldRelation& r : h.relations) {
      r.s = perm[static_cast<std::size_t>(r.s)];
      r.o = perm[static_cast<std::size_t>(r.o)];
    }
    EXPECT_EQ(oracle_answer(h, q.program, c.vocab), q.answer);
  }
}

TEST(SynthTest, UniformConceptsWithoutSkew) {
  CorpusConfig cfg = small_config(3000, 0.5, 21);
  cfg.questions_per_scene = 0;
  cfg.zipf = 0.0;
  const Corpus c = generate(cfg);
  std::map<std::string, int> counts;
  int total = 0;
  for (const GoldScene& g : c.scenes) {
    for (const GoldObject& o : g.objects) {
      ++counts[o.attributes.at("color").front()];
      ++total;
    }
  }
  ASSERT_GE(total, 10000);
  const double p = 1.0 / 8.0;
  const double sigma = std::sqrt(total * p * (1 - p));
  for (const auto& [name, n] : counts) EXPECT_LT(std::fabs(n - total * p), 3 * sigma) << name;
}

TEST(SynthTest, Fig2FixtureRoundTripAndFilterRemoval) {
  const Fig2Fixture f = adversarial_scene_fig2();
  const std::string path = ::testing::TempDir() + "/fig2.jsonl";
  write_gold_scenes(path, {f.scene});
  const auto back = load_gold_scenes(path);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(gold_scene_to_json(back[0]), gold_scene_to_json(f.scene));
  std::remove(path.c_str());
  EXPECT_EQ(oracle_answer(f.scene, remove_node(f.program, 1), f.vocab), "yes");
}

TEST(SynthTest, Fig2FixtureAnswer) {
  const Fig2Fixture f = adversarial_scene_fig2();
  EXPECT_EQ(oracle_answer(f.scene, f.program, f.vocab), f.answer);
  EXPECT_EQ(f.answer, "no");
}

TEST(SynthTest, ModuleSuiteCoversEveryModule) {
  const ModuleSuite m = module_suite();
  std::set<OpType> seen;
  for (std::size_t i = 0; i < m.programs.size(); ++i) {
    for (const OperationNode& n : m.programs[i].nodes()) seen.insert(n.type);
    EXPECT_NE(m.answers[i], "none");
    EXPECT_NE(m.answers[i], "ambiguous") << serialize_program(m.programs[i], m.vocab);
  }
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(kNumOpTypes));
  EXPECT_EQ(m.answers[3], "black");
  EXPECT_EQ(m.answers[4], "left_of");
  EXPECT_EQ(m.answers[5], "smaller_than");
  EXPECT_EQ(m.answers[6], "girl");
  EXPECT_EQ(m.answers[7], "material");
}

// With hand-set identity parameters the executor reproduces the oracle on
// gold features.
TEST(SynthTest, IdentityExecutorMatchesOracle) {
  const Corpus& c = shared_corpus();
  ModelConfig cfg;
  cfg.dim = 20;
  cfg.mapping_hidden = 24;
  cfg.pair_hidden = 16;
  Model model(c.vocab, cfg);
  configure_identity(model);
  std::map<std::string, Scene> feats;
  for (const GoldScene& g : c.scenes) feats.emplace(g.id, gold_to_features(g, c.vocab));
  int agree = 0;
  std::map<std::string, int> misses;
  for (const Question& q : c.questions) {
    const ExecResult r = execute_eval(model, q.program, feats.at(q.scene_id));
    if (r.answer == q.answer) {
      ++agree;
    } else {
      ++misses[q.tmpl];
      if (misses[q.tmpl] <= 2) {
        ADD_FAILURE() << q.tmpl << ": " << serialize_program(q.program, c.vocab) << " gold "
                      << q.answer << " got " << r.answer;
      }
    }
  }
  EXPECT_EQ(agree, static_cast<int>(c.questions.size()));
}

}  // namespace
}  // namespace calico
