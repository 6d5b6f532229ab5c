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

#include "calico/errors.hpp"

namespace calico {

namespace {

constexpr double kBoxTolerance = 1e-9;
constexpr double kRatioEps = 1e-3;

void check_box(const Box& b, const std::string& where) {
  for (double v : b) {
    if (!std::isfinite(v) || v < -kBoxTolerance || v > 1.0 + kBoxTolerance) {
      throw SchemaError(where + ": box coordinate outside [0, 1]");
    }
  }
  if (b[0] > b[2] || b[1] > b[3]) throw SchemaError(where + ": box is not ordered");
}

Box read_box(const nlohmann::json& j, double width, double height) {
  if (!j.is_array() || j.size() != 4) throw SchemaError("box must have 4 numbers");
  Box b;
  for (std::size_t k = 0; k < 4; ++k) b[k] = j[k].get<double>();
  b[0] /= width;
  b[2] /= width;
  b[1] /= height;
  b[3] /= height;
  return b;
}

std::pair<double, double> image_size(const nlohmann::json& j) {
  double w = 1.0, h = 1.0;
  if (j.contains("width")) w = j["width"].get<double>();
  if (j.contains("height")) h = j["height"].get<double>();
  if (!(w > 0) || !(h > 0)) throw SchemaError("width and height must be positive");
  return {w, h};
}

}  // namespace

std::array<double, kBoxFeatureDim> box_features(const Box& b) {
  const double w = b[2] - b[0];
  const double h = b[3] - b[1];
  return {b[0], b[1], b[2], b[3], w, h, b[0] + 0.5 * w, b[1] + 0.5 * h};
}

std::array<double, kPairBoxFeatureDim> pair_box_features(const Box& subject,
                                                         const Box& object) {
  const auto s = box_features(subject);
  const auto o = box_features(object);
  std::array<double, kPairBoxFeatureDim> out{};
  std::copy(s.begin(), s.end(), out.begin());
  std::copy(o.begin(), o.end(), out.begin() + kBoxFeatureDim);
  out[16] = s[6] - o[6];
  out[17] = s[7] - o[7];
  out[18] = std::log((s[4] + kRatioEps) / (o[4] + kRatioEps));
  out[19] = std::log((s[5] + kRatioEps) / (o[5] + kRatioEps));
  return out;
}

void validate_scene(const Scene& s) {
  if (s.objects.empty()) throw SchemaError("scene '" + s.id + "' has no objects");
  const std::size_t dim = s.objects.front().features.size();
  for (int i = 0; i < s.size(); ++i) {
    const SceneObject& o = s.objects[static_cast<std::size_t>(i)];
    const std::string where = "scene '" + s.id + "' object " + std::to_string(i);
    if (o.features.size() != dim) throw SchemaError(where + ": feature length differs");
    for (double v : o.features) {
      if (!std::isfinite(v)) throw SchemaError(where + ": non-finite feature");
    }
    check_box(o.box, where);
  }
}

void validate_gold_scene(const GoldScene& g) {
  if (g.objects.empty()) throw SchemaError("gold scene '" + g.id + "' has no objects");
  for (int i = 0; i < g.size(); ++i) {
    check_box(g.objects[static_cast<std::size_t>(i)].box,
              "gold scene '" + g.id + "' object " + std::to_string(i));
  }
  for (const GoldRelation& r : g.relations) {
    if (r.s < 0 || r.s >= g.size() || r.o < 0 || r.o >= g.size()) {
      throw SchemaError("gold scene '" + g.id + "': relation '" + r.rel +
                        "' has an invalid endpoint");
    }
  }
}

Scene gold_to_features(const GoldScene& g, const Vocabulary& vocab) {
  validate_gold_scene(g);
  Scene s;
  s.id = g.id;
  s.score_kind = "gold";
  const AttrId cls_attr = vocab.class_attribute();
  for (const GoldObject& o : g.objects) {
    SceneObject so;
    so.box = o.box;
    so.features.assign(static_cast<std::size_t>(vocab.feature_dim()), 0.0);
    const ConceptId c = vocab.concept_id(o.cls);
    if (vocab.concept_info(c).attr != cls_attr) {
      throw UnknownSymbol("'" + o.cls + "' is not an object class");
    }
    so.features[static_cast<std::size_t>(vocab.feature_index(c))] = 1.0;
    for (const auto& [family, values] : o.attributes) {
      const AttrId a = vocab.attribute_id(family);
      for (const std::string& v : values) {
        const ConceptId vc = vocab.concept_id(v);
        if (vocab.concept_info(vc).attr != a) {
          throw UnknownSymbol("'" + v + "' is not a value of " + family);
        }
        so.features[static_cast<std::size_t>(vocab.feature_index(vc))] = 1.0;
      }
    }
    s.objects.push_back(std::move(so));
  }
  return s;
}

nlohmann::json scene_to_json(const Scene& s) {
  nlohmann::json objs = nlohmann::json::array();
  for (const SceneObject& o : s.objects) {
    objs.push_back({{"box", o.box}, {"features", o.features}});
  }
  return {{"id", s.id}, {"width", 1}, {"height", 1}, {"score_kind", s.score_kind},
          {"objects", std::move(objs)}};
}

Scene scene_from_json(const nlohmann::json& j) {
  Scene s;
  try {
    s.id = j.at("id").get<std::string>();
    const auto [w, h] = image_size(j);
    if (j.contains("score_kind")) s.score_kind = j["score_kind"].get<std::string>();
    for (const auto& o : j.at("objects")) {
      SceneObject so;
      so.box = read_box(o.at("box"), w, h);
      so.features = o.at("features").get<std::vector<double>>();
      s.objects.push_back(std::move(so));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed scene: ") + e.what());
  }
  validate_scene(s);
  return s;
}

nlohmann::json gold_scene_to_json(const GoldScene& g) {
  nlohmann::json objs = nlohmann::json::array();
  for (const GoldObject& o : g.objects) {
    objs.push_back({{"box", o.box}, {"class", o.cls}, {"attributes", o.attributes}});
  }
  nlohmann::json rels = nlohmann::json::array();
  for (const GoldRelation& r : g.relations) {
    rels.push_back({{"s", r.s}, {"o", r.o}, {"rel", r.rel}});
  }
  return {{"id", g.id}, {"objects", std::move(objs)}, {"relations", std::move(rels)}};
}

GoldScene gold_scene_from_json(const nlohmann::json& j) {
  GoldScene g;
  try {
    g.id = j.at("id").get<std::string>();
    const auto [w, h] = image_size(j);
    for (const auto& o : j.at("objects")) {
      GoldObject go;
      go.box = read_box(o.at("box"), w, h);
      go.cls = o.at("class").get<std::string>();
      if (o.contains("attributes")) {
        go.attributes =
            o["attributes"].get<std::map<std::string, std::vector<std::string>>>();
      }
      g.objects.push_back(std::move(go));
    }
    if (j.contains("relations")) {
      for (const auto& r : j["relations"]) {
        g.relations.push_back(
            {r.at("s").get<int>(), r.at("o").get<int>(), r.at("rel").get<std::string>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed gold scene: ") + e.what());
  }
  validate_gold_scene(g);
  return g;
}

// ---- files ----------------------------------------------------------------------

SceneReader::SceneReader(const std::string& path, SceneFormat format,
                         const Vocabulary* vocab)
    : path_(path), format_(format), vocab_(vocab), in_(path) {
  if (!in_) throw IoError("cannot open " + path);
  if (format_ == SceneFormat::kGold && vocab_ == nullptr) {
    throw ConfigError("reading gold scenes needs a vocabulary");
  }
}

std::optional<Scene> SceneReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      if (format_ == SceneFormat::kScores) return scene_from_json(j);
      return gold_to_features(gold_scene_from_json(j), *vocab_);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(path_ + ":" + std::to_string(line_) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path_ + ":" + std::to_string(line_) + ": " + e.what());
    }
  }
  return std::nullopt;
}

std::vector<Scene> load_scenes(const std::string& path, SceneFormat format,
                               const Vocabulary* vocab) {
  SceneReader reader(path, format, vocab);
  std::vector<Scene> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

std::vector<GoldScene> load_gold_scenes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<GoldScene> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(gold_scene_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(path + ":" + std::to_string(n) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

namespace {

template <typename T, typename F>
void write_jsonl(const std::string& path, const std::vector<T>& items, F to_json) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const T& item : items) out << to_json(item).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void write_scenes(const std::string& path, const std::vector<Scene>& scenes) {
  write_jsonl(path, scenes, scene_to_json);
}

void write_gold_scenes(const std::string& path, const std::vector<GoldScene>& scenes) {
  write_jsonl(path, scenes, gold_scene_to_json);
}

}  // namespace calico
