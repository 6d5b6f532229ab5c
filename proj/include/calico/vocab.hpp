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

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace calico {

using ConceptId = int;
using AttrId = int;

// Relationship types. Every relation concept belongs to exactly one group.
enum class RelType { kSpatial = 0, kSemantic = 1, kSpatialSemantic = 2 };
inline constexpr int kNumRelTypes = 3;

std::string_view rel_type_name(RelType t);
std::optional<RelType> rel_type_from_name(std::string_view name);

struct ConceptInfo {
  std::string name;
  bool is_relation = false;
  AttrId attr = -1;  // family, for attribute concepts
  RelType rtype = RelType::kSpatial;  // group, for relation concepts
};

// Dense, stable ids for attribute families, concepts (attribute values and
// object names) and relations. The family named "name" holds object classes.
// Concept names are unique across families and relations.
class Vocabulary {
 public:
  static constexpr std::string_view kClassFamily = "name";

  AttrId add_attribute(const std::string& name);
  ConceptId add_concept(const std::string& name, AttrId family);
  ConceptId add_relation(const std::string& name, RelType rtype);

  int num_attributes() const { return static_cast<int>(attributes_.size()); }
  int num_concepts() const { return static_cast<int>(concepts_.size()); }

  const ConceptInfo& concept_info(ConceptId id) const;
  const std::string& concept_name(ConceptId id) const {
    return concept_info(id).name;
  }
  std::optional<ConceptId> find_concept(std::string_view name) const;
  ConceptId concept_id(std::string_view name) const;  // throws UnknownSymbol

  const std::string& attribute_name(AttrId id) const;
  std::optional<AttrId> find_attribute(std::string_view name) const;
  AttrId attribute_id(std::string_view name) const;  // throws UnknownSymbol
  // Family holding object classes; throws UnknownSymbol when absent.
  AttrId class_attribute() const;

  // C(attr) and C(rtype): candidate answers, in id order.
  const std::vector<ConceptId>& candidates(AttrId attr) const;
  const std::vector<ConceptId>& relations(RelType rtype) const;

  // Symbolic feature layout: the class block (values of "name") followed by
  // the values of every other family in family-id order.
  int feature_dim() const;
  int num_classes() const;
  // Index of an attribute concept in the feature vector.
  int feature_index(ConceptId id) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& o) const;

 private:
  void rebuild_layout();

  std::vector<std::string> attributes_;
  std::vector<ConceptInfo> concepts_;
  std::vector<std::vector<ConceptId>> by_attr_;
  std::vector<std::vector<ConceptId>> by_rtype_ =
      std::vector<std::vector<ConceptId>>(kNumRelTypes);
  std::unordered_map<std::string, ConceptId> concept_index_;
  std::unordered_map<std::string, AttrId> attr_index_;
  std::vector<int> feature_index_;
  int feature_dim_ = 0;
};

}  // namespace calico
