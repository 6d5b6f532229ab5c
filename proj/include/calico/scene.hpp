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
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "calico/vocab.hpp"

namespace calico {

// Normalized [x1, y1, x2, y2] with x1 <= x2 and y1 <= y2, all in [0, 1].
using Box = std::array<double, 4>;

inline constexpr int kBoxFeatureDim = 8;
inline constexpr int kPairBoxFeatureDim = 2 * kBoxFeatureDim + 4;

// [x1, y1, x2, y2, w, h, cx, cy]
std::array<double, kBoxFeatureDim> box_features(const Box& b);
// Box features of subject and object followed by (dx, dy, log w-ratio,
// log h-ratio), offsets taken subject minus object.
std::array<double, kPairBoxFeatureDim> pair_box_features(const Box& subject,
                                                         const Box& object);

struct SceneObject {
  std::vector<double> features;
  Box box{};
};

struct Scene {
  std::string id;
  std::vector<SceneObject> objects;
  // How the feature scores were produced: "gold", "softmax", "raw" or
  // "dense". Informational only.
  std::string score_kind = "raw";

  int size() const { return static_cast<int>(objects.size()); }
  int feature_dim() const {
    return objects.empty() ? 0 : static_cast<int>(objects.front().features.size());
  }
};

struct GoldObject {
  Box box{};
  std::string cls;
  std::map<std::string, std::vector<std::string>> attributes;  // family -> values
};

struct GoldRelation {
  int s = 0;
  int o = 0;
  std::string rel;
};

struct GoldScene {
  std::string id;
  std::vector<GoldObject> objects;
  std::vector<GoldRelation> relations;

  int size() const { return static_cast<int>(objects.size()); }
};

// Throws SchemaError unless the scene is nonempty, every feature vector has
// the same length and is finite, and every box is ordered and inside [0, 1].
void validate_scene(const Scene& s);
void validate_gold_scene(const GoldScene& g);

// One-hot class block followed by a multi-hot attribute block.
Scene gold_to_features(const GoldScene& g, const Vocabulary& vocab);

nlohmann::json scene_to_json(const Scene& s);
// Boxes are divided by "width" / "height" when present.
Scene scene_from_json(const nlohmann::json& j);
nlohmann::json gold_scene_to_json(const GoldScene& g);
GoldScene gold_scene_from_json(const nlohmann::json& j);

enum class SceneFormat { kScores, kGold };

// Lazy line-by-line reader over a JSONL file. Blank lines are skipped; bad
// records raise SchemaError naming the line. Gold records are converted with
// gold_to_features, which needs a vocabulary.
class SceneReader {
 public:
  SceneReader(const std::string& path, SceneFormat format,
              const Vocabulary* vocab = nullptr);
  std::optional<Scene> next();

 private:
  std::string path_;
  SceneFormat format_;
  const Vocabulary* vocab_;
  std::ifstream in_;
  int line_ = 0;
};

std::vector<Scene> load_scenes(const std::string& path, SceneFormat format,
                               const Vocabulary* vocab = nullptr);
std::vector<GoldScene> load_gold_scenes(const std::string& path);
void write_scenes(const std::string& path, const std::vector<Scene>& scenes);
void write_gold_scenes(const std::string& path, const std::vector<GoldScene>& scenes);

}  // namespace calico
