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
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "calico/vocab.hpp"

namespace calico {

// The 18 execution modules.
enum class OpType : int {
  kSelect = 0,
  kFilter,
  kRelateO,
  kRelateS,
  kRelateAe,
  kQuery,
  kQueryRelS,
  kQueryRelO,
  kVerify,
  kChoose,
  kVerifyRelS,
  kVerifyRelO,
  kSame,
  kQueryAe,
  kCommon,
  kExist,
  kIntersect,
  kUnion,
};
inline constexpr int kNumOpTypes = 18;

std::string_view op_name(OpType t);
std::optional<OpType> op_from_name(std::string_view name);
std::array<OpType, kNumOpTypes> all_op_types();

// What a module produces.
enum class OutputKind {
  kDistribution,  // d over objects (intermediate modules)
  kBinary,        // scalar score, "yes" iff above threshold
  kOpen,          // score per candidate concept
  kChoice,        // one score per input branch
  kCommon,        // one score per attribute family
};

enum class ArgKind { kNone, kAttribute, kRelType };
enum class ConceptKind { kNone, kAttributeValue, kRelation };

struct OpSignature {
  int arity;
  ArgKind bracket;        // what the [..] argument names
  ConceptKind concept_kind;
  bool negatable;
  bool scalar_inputs;     // deps are binary output modules (intersect/union)
  OutputKind output;
  bool is_output_module() const { return output != OutputKind::kDistribution; }
};

const OpSignature& signature(OpType t);

struct OperationNode {
  OpType type = OpType::kSelect;
  std::optional<AttrId> attr;
  std::optional<ConceptId> concept_id;
  std::optional<RelType> rtype;
  bool neg = false;
  std::vector<int> deps;

  bool operator==(const OperationNode&) const = default;
};

// A tree of operations stored in pre-order; node 0 is the root. Immutable
// once constructed.
class Program {
 public:
  Program() = default;
  // Validates structure (arity, arguments, pre-order tree, output module at
  // the root); with a vocabulary also checks that concepts belong to the
  // stated family or relation group.
  explicit Program(std::vector<OperationNode> nodes,
                   const Vocabulary* vocab = nullptr);

  const std::vector<OperationNode>& nodes() const { return nodes_; }
  const OperationNode& node(int i) const {
    return nodes_.at(static_cast<std::size_t>(i));
  }
  const OperationNode& root() const { return nodes_.front(); }
  int size() const { return static_cast<int>(nodes_.size()); }
  // Parent of each node (-1 for the root).
  std::vector<int> parents() const;
  // Index one past the last node of the subtree rooted at `i`.
  int subtree_end(int i) const;

  bool operator==(const Program& o) const { return nodes_ == o.nodes_; }

 private:
  std::vector<OperationNode> nodes_;
};

// Compact text form, e.g. `exist(filter[color](black, neg; select[name](bag)))`.
//   op   ::= TYPE ['[' ARG ']'] '(' body ')'
//   body ::= [CONCEPT [',' 'neg'] [';' deps]] | deps
//   deps ::= op [',' op]
// The bracket may be omitted when it can be inferred from the concept.
Program parse_program(std::string_view text, const Vocabulary& vocab);
std::string serialize_program(const Program& p, const Vocabulary& vocab);

// Human-readable label of one node, e.g. `filter[color](black, neg)`.
std::string node_label(const OperationNode& n, const Vocabulary& vocab);

// JSON node list in pre-order:
// [{"type","attr","concept","rtype","neg","deps"}, ...]
nlohmann::json program_to_json(const Program& p, const Vocabulary& vocab);
Program program_from_json(const nlohmann::json& j, const Vocabulary& vocab);

// Explicit pre-order traversal from the root.
std::vector<OperationNode> preorder_linearize(const Program& p);

bool is_removable_type(OpType t);
// Filter/relate nodes whose removal leaves a valid program.
std::set<int> removable_set(const Program& p);
// Filter removal splices its dependency into the parent; relate removal keeps
// the first dependency and drops the second subtree. Throws NotRemovable.
Program remove_node(const Program& p, int index);
// Maps each surviving old index to its new index (-1 when dropped).
std::vector<int> removal_index_map(const Program& p, int index);

}  // namespace calico
