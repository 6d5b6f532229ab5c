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

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "calico/executor.hpp"
#include "calico/program.hpp"
#include "calico/scene.hpp"
#include "calico/vocab.hpp"

namespace calico {

struct CorpusConfig {
  int num_classes = 16;
  // Non-class attribute families and their number of values.
  std::vector<std::pair<std::string, int>> families = {
      {"color", 8}, {"material", 4}, {"size", 3}, {"shape", 4}};
  double zipf = 1.0;  // 0 = uniform
  int num_scenes = 500;
  int questions_per_scene = 4;
  int min_objects = 3;
  int max_objects = 7;
  double overspec = 0.5;  // probability a question carries redundant operations
  // Relative weights of question templates (see template_names()).
  std::map<std::string, double> template_weights;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
};

const std::vector<std::string>& template_names();

struct Question {
  std::string qid;
  std::string scene_id;
  Program program;
  std::string answer;
  std::string tmpl;
  bool overspecified = false;
};

struct Corpus {
  Vocabulary vocab;
  std::vector<GoldScene> scenes;
  std::vector<Question> questions;
};

Vocabulary synth_vocabulary(const CorpusConfig& cfg);
Corpus generate(const CorpusConfig& cfg);

// Exact set semantics over gold labels. Returns "none" when a question
// refers to nothing and "ambiguous" when the referent is not unique.
std::string oracle_answer(const GoldScene& g, const Program& p, const Vocabulary& vocab);

// Zipf weights 1 / (k + 1)^s, normalized.
std::vector<double> zipf_weights(int n, double s);

// Gold relations implied by box geometry (left_of/right_of, above/below,
// bigger_than/smaller_than) between every ordered pair of distinct objects.
std::vector<GoldRelation> geometric_relations(const std::vector<GoldObject>& objects);
// Whether every ordered pair is separated by the generator's margins.
bool boxes_well_separated(const std::vector<GoldObject>& objects);

// Detector-like features: per block (classes, then each family), scores are
// softmax(signal * one-hot + noise) with Gaussian noise of the given scale.
Scene perceive(const GoldScene& g, const Vocabulary& vocab, double signal, double noise,
               std::mt19937_64& rng);
// Same, with a separate signal for the non-class families.
Scene perceive(const GoldScene& g, const Vocabulary& vocab, double class_signal,
               double attribute_signal, double noise, std::mt19937_64& rng);

// Question records: {"qid", "scene", "program", "answer", "template", "over"}.
nlohmann::json question_to_json(const Question& q, const Vocabulary& vocab);
Question question_from_json(const nlohmann::json& j, const Vocabulary& vocab);
void write_questions(const std::string& path, const std::vector<Question>& qs,
                     const Vocabulary& vocab);
std::vector<Question> load_questions(const std::string& path, const Vocabulary& vocab);

// Random well-formed programs over every module type, built from node lists
// without reference to any scene.
class ProgramSampler {
 public:
  ProgramSampler(const Vocabulary& v, std::uint64_t seed);
  Program next();

 private:
  int pick(int n);
  ConceptId value_of(AttrId a);
  int build_output(std::vector<OperationNode>& nodes, int depth);
  int build_dist(std::vector<OperationNode>& nodes, int depth);
  int build(std::vector<OperationNode>& nodes, OpType t, int depth);

  const Vocabulary& v_;
  std::mt19937 rng_;
};

// The bag / girl scene where the only bag is black and the question asks
// whether there is a bag that is not black.
struct Fig2Fixture {
  Vocabulary vocab;
  GoldScene scene;
  Program program;
  std::string answer;
};
Fig2Fixture adversarial_scene_fig2();

// A small scene and a set of programs that together use all 18 modules,
// with their oracle answers.
struct ModuleSuite {
  Vocabulary vocab;
  GoldScene scene;
  std::vector<Program> programs;
  std::vector<std::string> answers;
};
ModuleSuite module_suite();

// Sets every mapping, pair and concept parameter so that the executor
// implements the gold set semantics on gold features: one-hot family
// embeddings, indicator pair embeddings for the geometric relations, hard
// attention, unit magnitudes and no operation calibration.
// Classes and attribute values in order of first appearance, families sorted
// by name, plus the standard relations and any others the scenes mention.
Vocabulary vocabulary_from_scenes(const std::vector<GoldScene>& scenes);

// Smallest sizes configure_identity accepts for `vocab`, with tau near 0,
// unit magnitudes and equal-weight merging.
ModelConfig identity_model_config(const Vocabulary& vocab);

void configure_identity(Model& model);

// Confident object-name scores and a weaker color score, so that on the
// fixture the equal-weight merge is dominated by select.
void configure_fig2_demo(Model& model);

}  // namespace calico
