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

#include "calico/vocab.hpp"

#include <fstream>

#include "calico/errors.hpp"

namespace calico {

std::string_view rel_type_name(RelType t) {
  switch (t) {
    case RelType::kSpatial: return "spatial";
    case RelType::kSemantic: return "semantic";
    case RelType::kSpatialSemantic: return "spatial_semantic";
  }
  return "spatial";
}

std::optional<RelType> rel_type_from_name(std::string_view name) {
  if (name == "spatial") return RelType::kSpatial;
  if (name == "semantic") return RelType::kSemantic;
  if (name == "spatial_semantic") return RelType::kSpatialSemantic;
  return std::nullopt;
}

AttrId Vocabulary::add_attribute(const std::string& name) {
  if (attr_index_.count(name) != 0) {
    throw ConfigError("duplicate attribute family '" + name + "'");
  }
  const AttrId id = num_attributes();
  attributes_.push_back(name);
  attr_index_.emplace(name, id);
  by_attr_.emplace_back();
  rebuild_layout();
  return id;
}

ConceptId Vocabulary::add_concept(const std::string& name, AttrId family) {
  if (family < 0 || family >= num_attributes()) {
    throw UnknownSymbol("unknown attribute family id " + std::to_string(family));
  }
  if (concept_index_.count(name) != 0) {
    throw ConfigError("duplicate concept '" + name + "'");
  }
  const ConceptId id = num_concepts();
  concepts_.push_back(ConceptInfo{name, false, family, RelType::kSpatial});
  concept_index_.emplace(name, id);
  by_attr_[static_cast<std::size_t>(family)].push_back(id);
  rebuild_layout();
  return id;
}

ConceptId Vocabulary::add_relation(const std::string& name, RelType rtype) {
  if (concept_index_.count(name) != 0) {
    throw ConfigError("duplicate concept '" + name + "'");
  }
  const ConceptId id = num_concepts();
  concepts_.push_back(ConceptInfo{name, true, -1, rtype});
  concept_index_.emplace(name, id);
  by_rtype_[static_cast<std::size_t>(rtype)].push_back(id);
  rebuild_layout();
  return id;
}

const ConceptInfo& Vocabulary::concept_info(ConceptId id) const {
  if (id < 0 || id >= num_concepts()) {
    throw UnknownSymbol("unknown concept id " + std::to_string(id));
  }
  return concepts_[static_cast<std::size_t>(id)];
}

std::optional<ConceptId> Vocabulary::find_concept(std::string_view name) const {
  auto it = concept_index_.find(std::string(name));
  if (it == concept_index_.end()) return std::nullopt;
  return it->second;
}

ConceptId Vocabulary::concept_id(std::string_view name) const {
  auto id = find_concept(name);
  if (!id) throw UnknownSymbol("unknown concept '" + std::string(name) + "'");
  return *id;
}

const std::string& Vocabulary::attribute_name(AttrId id) const {
  if (id < 0 || id >= num_attributes()) {
    throw UnknownSymbol("unknown attribute id " + std::to_string(id));
  }
  return attributes_[static_cast<std::size_t>(id)];
}

std::optional<AttrId> Vocabulary::find_attribute(std::string_view name) const {
  auto it = attr_index_.find(std::string(name));
  if (it == attr_index_.end()) return std::nullopt;
  return it->second;
}

AttrId Vocabulary::attribute_id(std::string_view name) const {
  auto id = find_attribute(name);
  if (!id) throw UnknownSymbol("unknown attribute '" + std::string(name) + "'");
  return *id;
}

AttrId Vocabulary::class_attribute() const { return attribute_id(kClassFamily); }

const std::vector<ConceptId>& Vocabulary::candidates(AttrId attr) const {
  if (attr < 0 || attr >= num_attributes()) {
    throw UnknownSymbol("unknown attribute id " + std::to_string(attr));
  }
  return by_attr_[static_cast<std::size_t>(attr)];
}

const std::vector<ConceptId>& Vocabulary::relations(RelType rtype) const {
  return by_rtype_[static_cast<std::size_t>(rtype)];
}

int Vocabulary::feature_dim() const { return feature_dim_; }

int Vocabulary::num_classes() const {
  auto cls = find_attribute(kClassFamily);
  return cls ? static_cast<int>(candidates(*cls).size()) : 0;
}

int Vocabulary::feature_index(ConceptId id) const {
  const ConceptInfo& info = concept_info(id);
  if (info.is_relation) {
    throw UnknownSymbol("relation '" + info.name + "' has no feature slot");
  }
  return feature_index_[static_cast<std::size_t>(id)];
}

void Vocabulary::rebuild_layout() {
  feature_index_.assign(concepts_.size(), -1);
  int next = 0;
  auto cls = find_attribute(kClassFamily);
  if (cls) {
    for (ConceptId c : by_attr_[static_cast<std::size_t>(*cls)]) {
      feature_index_[static_cast<std::size_t>(c)] = next++;
    }
  }
  for (AttrId a = 0; a < num_attributes(); ++a) {
    if (cls && a == *cls) continue;
    for (ConceptId c : by_attr_[static_cast<std::size_t>(a)]) {
      feature_index_[static_cast<std::size_t>(c)] = next++;
    }
  }
  feature_dim_ = next;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json concepts = nlohmann::json::array();
  for (const ConceptInfo& c : concepts_) {
    if (c.is_relation) {
      concepts.push_back({{"name", c.name}, {"rtype", rel_type_name(c.rtype)}});
    } else {
      concepts.push_back({{"name", c.name},
                          {"attr", attributes_[static_cast<std::size_t>(c.attr)]}});
    }
  }
  return {{"attributes", attributes_}, {"concepts", std::move(concepts)}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  Vocabulary v;
  try {
    for (const auto& a : j.at("attributes")) v.add_attribute(a.get<std::string>());
    for (const auto& c : j.at("concepts")) {
      const std::string name = c.at("name").get<std::string>();
      if (c.contains("rtype")) {
        auto rt = rel_type_from_name(c["rtype"].get<std::string>());
        if (!rt) throw SchemaError("bad rtype for relation '" + name + "'");
        v.add_relation(name, *rt);
      } else {
        v.add_concept(name, v.attribute_id(c.at("attr").get<std::string>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed vocabulary: ") + e.what());
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary '" + path + "'");
  out << to_json().dump(1) << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("vocabulary '" + path + "' is not valid JSON: " + e.what());
  }
  return from_json(j);
}

bool Vocabulary::operator==(const Vocabulary& o) const {
  if (attributes_ != o.attributes_ || concepts_.size() != o.concepts_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    const ConceptInfo& a = concepts_[i];
    const ConceptInfo& b = o.concepts_[i];
    if (a.name != b.name || a.is_relation != b.is_relation || a.attr != b.attr ||
        (a.is_relation && a.rtype != b.rtype)) {
      return false;
    }
  }
  return true;
}

}  // namespace calico
