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

#include "calico/program.hpp"

#include <cctype>
#include <functional>

#include "calico/errors.hpp"

namespace calico {

namespace {

constexpr std::array<std::string_view, kNumOpTypes> kOpNames = {
    "select",     "filter",       "relate_o",     "relate_s", "relate_ae",
    "query",      "query_rel_s",  "query_rel_o",  "verify",   "choose",
    "verify_rel_s", "verify_rel_o", "same",       "query_ae", "common",
    "exist",      "intersect",    "union",
};

using AK = ArgKind;
using CK = ConceptKind;
using OK = OutputKind;

constexpr std::array<OpSignature, kNumOpTypes> kSignatures = {{
    {0, AK::kAttribute, CK::kAttributeValue, false, false, OK::kDistribution},
    {1, AK::kAttribute, CK::kAttributeValue, true, false, OK::kDistribution},
    {2, AK::kRelType, CK::kRelation, false, false, OK::kDistribution},
    {2, AK::kRelType, CK::kRelation, false, false, OK::kDistribution},
    {2, AK::kAttribute, CK::kNone, false, false, OK::kDistribution},
    {1, AK::kAttribute, CK::kNone, false, false, OK::kOpen},
    {2, AK::kRelType, CK::kNone, false, false, OK::kOpen},
    {2, AK::kRelType, CK::kNone, false, false, OK::kOpen},
    {1, AK::kAttribute, CK::kAttributeValue, false, false, OK::kBinary},
    {2, AK::kAttribute, CK::kAttributeValue, false, false, OK::kChoice},
    {2, AK::kRelType, CK::kRelation, false, false, OK::kBinary},
    {2, AK::kRelType, CK::kRelation, false, false, OK::kBinary},
    {1, AK::kAttribute, CK::kNone, false, false, OK::kBinary},
    {2, AK::kAttribute, CK::kNone, false, false, OK::kBinary},
    {2, AK::kNone, CK::kNone, false, false, OK::kCommon},
    {1, AK::kNone, CK::kNone, false, false, OK::kBinary},
    {2, AK::kNone, CK::kNone, false, true, OK::kBinary},
    {2, AK::kNone, CK::kNone, false, true, OK::kBinary},
}};

void validate_node(const OperationNode& n, int index, const Vocabulary* vocab) {
  const OpSignature& sig = signature(n.type);
  const std::string where =
      std::string(op_name(n.type)) + " (node " + std::to_string(index) + ")";
  if (static_cast<int>(n.deps.size()) != sig.arity) {
    throw ArityError(where + " takes " + std::to_string(sig.arity) +
                     " dependencies, got " + std::to_string(n.deps.size()));
  }
  if (n.attr.has_value() != (sig.bracket == ArgKind::kAttribute)) {
    throw ArityError(where + (n.attr ? " takes no attribute argument"
                                     : " requires an attribute argument"));
  }
  if (n.rtype.has_value() != (sig.bracket == ArgKind::kRelType)) {
    throw ArityError(where + (n.rtype ? " takes no relation type"
                                      : " requires a relation type"));
  }
  if (n.concept_id.has_value() != (sig.concept_kind != ConceptKind::kNone)) {
    throw ArityError(where + (n.concept_id ? " takes no concept argument"
                                           : " requires a concept argument"));
  }
  if (n.neg && !sig.negatable) {
    throw ArityError(where + " cannot be negated");
  }
  if (vocab == nullptr) return;
  if (n.attr && (*n.attr < 0 || *n.attr >= vocab->num_attributes())) {
    throw UnknownSymbol(where + ": unknown attribute id");
  }
  if (n.concept_id) {
    const ConceptInfo& info = vocab->concept_info(*n.concept_id);
    if (sig.concept_kind == ConceptKind::kRelation) {
      if (!info.is_relation) {
        throw UnknownSymbol(where + ": '" + info.name + "' is not a relation");
      }
      if (info.rtype != *n.rtype) {
        throw UnknownSymbol(where + ": relation '" + info.name +
                            "' is not of type " +
                            std::string(rel_type_name(*n.rtype)));
      }
    } else {
      if (info.is_relation) {
        throw UnknownSymbol(where + ": '" + info.name + "' is a relation");
      }
      if (info.attr != *n.attr) {
        throw UnknownSymbol(where + ": '" + info.name + "' is not a value of " +
                            vocab->attribute_name(*n.attr));
      }
    }
  }
}

}  // namespace

std::string_view op_name(OpType t) { return kOpNames[static_cast<std::size_t>(t)]; }

std::optional<OpType> op_from_name(std::string_view name) {
  for (int i = 0; i < kNumOpTypes; ++i) {
    if (kOpNames[static_cast<std::size_t>(i)] == name) return static_cast<OpType>(i);
  }
  return std::nullopt;
}

std::array<OpType, kNumOpTypes> all_op_types() {
  std::array<OpType, kNumOpTypes> out{};
  for (int i = 0; i < kNumOpTypes; ++i) out[static_cast<std::size_t>(i)] = static_cast<OpType>(i);
  return out;
}

const OpSignature& signature(OpType t) {
  return kSignatures[static_cast<std::size_t>(t)];
}

// ---- Program -------------------------------------------------------------------

Program::Program(std::vector<OperationNode> nodes, const Vocabulary* vocab)
    : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw InvalidProgram("program has no operations");
  const int m = size();
  for (int i = 0; i < m; ++i) validate_node(nodes_[static_cast<std::size_t>(i)], i, vocab);

  // The node list must be exactly the pre-order traversal of a tree rooted
  // at 0.
  int next = 0;
  std::function<void(int)> visit = [&](int i) {
    if (i != next) {
      throw InvalidProgram("nodes are not in pre-order (expected node " +
                           std::to_string(next) + ", reached " +
                           std::to_string(i) + ")");
    }
    ++next;
    for (int d : nodes_[static_cast<std::size_t>(i)].deps) {
      if (d <= i || d >= m) {
        throw InvalidProgram("node " + std::to_string(i) +
                             " has invalid dependency " + std::to_string(d));
      }
      visit(d);
    }
  };
  visit(0);
  if (next != m) {
    throw InvalidProgram("nodes " + std::to_string(next) + ".." +
                         std::to_string(m - 1) + " are unreachable from the root");
  }

  if (!signature(nodes_[0].type).is_output_module()) {
    throw InvalidProgram("root '" + std::string(op_name(nodes_[0].type)) +
                         "' is not an output module");
  }
  for (int i = 0; i < m; ++i) {
    const OperationNode& n = nodes_[static_cast<std::size_t>(i)];
    const bool scalar_in = signature(n.type).scalar_inputs;
    for (int d : n.deps) {
      const OpSignature& child = signature(nodes_[static_cast<std::size_t>(d)].type);
      if (scalar_in && child.output != OutputKind::kBinary) {
        throw InvalidProgram(std::string(op_name(n.type)) +
                             " needs yes/no inputs, got " +
                             std::string(op_name(nodes_[static_cast<std::size_t>(d)].type)));
      }
      if (!scalar_in && child.output != OutputKind::kDistribution) {
        throw InvalidProgram(std::string(op_name(n.type)) +
                             " needs object distributions, got " +
                             std::string(op_name(nodes_[static_cast<std::size_t>(d)].type)));
      }
    }
  }
}

std::vector<int> Program::parents() const {
  std::vector<int> p(nodes_.size(), -1);
  for (int i = 0; i < size(); ++i)
    for (int d : nodes_[static_cast<std::size_t>(i)].deps) p[static_cast<std::size_t>(d)] = i;
  return p;
}

int Program::subtree_end(int i) const {
  const auto& deps = node(i).deps;
  return deps.empty() ? i + 1 : subtree_end(deps.back());
}

// ---- text form -------------------------------------------------------------------

namespace {

class Parser {
 public:
  Parser(std::string_view text, const Vocabulary& vocab)
      : text_(text), vocab_(vocab) {}

  Program parse() {
    skip_ws();
    parse_op();
    skip_ws();
    if (pos_ != text_.size()) fail("trailing input");
    return Program(std::move(nodes_), &vocab_);
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw SyntaxError(pos_, what); }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
           c == '\'' || c == '.';
  }

  std::string ident() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && ident_char(text_[pos_])) ++pos_;
    if (pos_ == start) fail("expected a name");
    return std::string(text_.substr(start, pos_ - start));
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  // True when the identifier starting at the cursor is followed by '[' or '('.
  bool next_is_op() {
    skip_ws();
    std::size_t p = pos_;
    while (p < text_.size() && ident_char(text_[p])) ++p;
    if (p == pos_) return false;
    while (p < text_.size() && std::isspace(static_cast<unsigned char>(text_[p]))) ++p;
    return p < text_.size() && (text_[p] == '(' || text_[p] == '[');
  }

  int parse_op() {
    const std::size_t op_pos = (skip_ws(), pos_);
    const std::string type_name = ident();
    auto type = op_from_name(type_name);
    if (!type) {
      pos_ = op_pos;
      throw UnknownSymbol("unknown operation '" + type_name + "' at position " +
                          std::to_string(op_pos));
    }
    const OpSignature& sig = signature(*type);
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(OperationNode{});
    OperationNode node;
    node.type = *type;

    std::optional<std::string> bracket;
    if (peek() == '[') {
      ++pos_;
      bracket = ident();
      expect(']');
    }
    expect('(');

    std::optional<std::string> concept_name;
    std::vector<int> deps;
    if (peek() != ')') {
      if (!next_is_op()) {
        concept_name = ident();
        if (peek() == ',') {
          ++pos_;
          const std::size_t flag_pos = (skip_ws(), pos_);
          const std::string flag = ident();
          if (flag != "neg") {
            pos_ = flag_pos;
            fail("expected 'neg' or ';' after concept");
          }
          node.neg = true;
        }
        if (peek() == ';') {
          ++pos_;
          parse_deps(deps);
        }
      } else {
        parse_deps(deps);
      }
    }
    expect(')');
    node.deps = std::move(deps);

    if (concept_name) {
      if (sig.concept_kind == ConceptKind::kNone) {
        throw ArityError(type_name + " takes no concept argument, got '" +
                         *concept_name + "'");
      }
      node.concept_id = vocab_.concept_id(*concept_name);
    }
    resolve_bracket(node, sig, type_name, bracket);
    nodes_[static_cast<std::size_t>(index)] = std::move(node);
    return index;
  }

  void parse_deps(std::vector<int>& deps) {
    deps.push_back(parse_op());
    while (peek() == ',') {
      ++pos_;
      deps.push_back(parse_op());
    }
  }

  void resolve_bracket(OperationNode& node, const OpSignature& sig,
                       const std::string& type_name,
                       const std::optional<std::string>& bracket) {
    switch (sig.bracket) {
      case ArgKind::kNone:
        if (bracket) throw ArityError(type_name + " takes no [argument]");
        return;
      case ArgKind::kAttribute:
        if (bracket) {
          node.attr = vocab_.attribute_id(*bracket);
        } else if (node.concept_id &&
                   !vocab_.concept_info(*node.concept_id).is_relation) {
          node.attr = vocab_.concept_info(*node.concept_id).attr;
        } else {
          throw ArityError(type_name + " requires an [attribute]");
        }
        return;
      case ArgKind::kRelType:
        if (bracket) {
          auto rt = rel_type_from_name(*bracket);
          if (!rt) throw UnknownSymbol("unknown relation type '" + *bracket + "'");
          node.rtype = *rt;
        } else if (node.concept_id &&
                   vocab_.concept_info(*node.concept_id).is_relation) {
          node.rtype = vocab_.concept_info(*node.concept_id).rtype;
        } else {
          throw ArityError(type_name + " requires a [relation type]");
        }
        return;
    }
  }

  std::string_view text_;
  const Vocabulary& vocab_;
  std::size_t pos_ = 0;
  std::vector<OperationNode> nodes_;
};

}  // namespace

Program parse_program(std::string_view text, const Vocabulary& vocab) {
  return Parser(text, vocab).parse();
}

std::string node_label(const OperationNode& n, const Vocabulary& vocab) {
  std::string s(op_name(n.type));
  if (n.attr) s += "[" + vocab.attribute_name(*n.attr) + "]";
  if (n.rtype) s += "[" + std::string(rel_type_name(*n.rtype)) + "]";
  s += "(";
  if (n.concept_id) {
    s += vocab.concept_name(*n.concept_id);
    if (n.neg) s += ", neg";
  }
  s += ")";
  return s;
}

std::string serialize_program(const Program& p, const Vocabulary& vocab) {
  std::function<void(int, std::string&)> emit = [&](int i, std::string& out) {
    const OperationNode& n = p.node(i);
    out += op_name(n.type);
    if (n.attr) out += "[" + vocab.attribute_name(*n.attr) + "]";
    if (n.rtype) out += "[" + std::string(rel_type_name(*n.rtype)) + "]";
    out += "(";
    if (n.concept_id) {
      out += vocab.concept_name(*n.concept_id);
      if (n.neg) out += ", neg";
      if (!n.deps.empty()) out += "; ";
    }
    for (std::size_t k = 0; k < n.deps.size(); ++k) {
      if (k > 0) out += ", ";
      emit(n.deps[k], out);
    }
    out += ")";
  };
  std::string out;
  emit(0, out);
  return out;
}

// ---- JSON form -------------------------------------------------------------------

nlohmann::json program_to_json(const Program& p, const Vocabulary& vocab) {
  nlohmann::json arr = nlohmann::json::array();
  for (const OperationNode& n : p.nodes()) {
    nlohmann::json j;
    j["type"] = std::string(op_name(n.type));
    j["attr"] = n.attr ? nlohmann::json(vocab.attribute_name(*n.attr)) : nlohmann::json();
    j["concept"] =
        n.concept_id ? nlohmann::json(vocab.concept_name(*n.concept_id)) : nlohmann::json();
    j["rtype"] = n.rtype ? nlohmann::json(std::string(rel_type_name(*n.rtype)))
                         : nlohmann::json();
    j["neg"] = n.neg;
    j["deps"] = n.deps;
    arr.push_back(std::move(j));
  }
  return arr;
}

Program program_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  if (!j.is_array()) throw SchemaError("program must be a JSON array");
  std::vector<OperationNode> nodes;
  nodes.reserve(j.size());
  for (const auto& e : j) {
    try {
      OperationNode n;
      const std::string type = e.at("type").get<std::string>();
      auto t = op_from_name(type);
      if (!t) throw UnknownSymbol("unknown operation '" + type + "'");
      n.type = *t;
      if (e.contains("attr") && !e["attr"].is_null()) {
        n.attr = vocab.attribute_id(e["attr"].get<std::string>());
      }
      if (e.contains("concept") && !e["concept"].is_null()) {
        n.concept_id = vocab.concept_id(e["concept"].get<std::string>());
      }
      if (e.contains("rtype") && !e["rtype"].is_null()) {
        auto rt = rel_type_from_name(e["rtype"].get<std::string>());
        if (!rt) throw UnknownSymbol("unknown relation type " + e["rtype"].dump());
        n.rtype = *rt;
      }
      n.neg = e.value("neg", false);
      if (e.contains("deps")) n.deps = e["deps"].get<std::vector<int>>();
      nodes.push_back(std::move(n));
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError(std::string("malformed program node: ") + ex.what());
    }
  }
  return Program(std::move(nodes), &vocab);
}

// ---- traversal and perturbation ------------------------------------------------------

std::vector<OperationNode> preorder_linearize(const Program& p) {
  std::vector<OperationNode> out;
  out.reserve(static_cast<std::size_t>(p.size()));
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    out.push_back(p.node(i));
    const auto& deps = p.node(i).deps;
    for (auto it = deps.rbegin(); it != deps.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

bool is_removable_type(OpType t) {
  return t == OpType::kFilter || t == OpType::kRelateO || t == OpType::kRelateS ||
         t == OpType::kRelateAe;
}

namespace {

std::vector<OperationNode> splice(const Program& p, int index, std::vector<int>& map) {
  map.assign(static_cast<std::size_t>(p.size()), -1);
  std::vector<OperationNode> out;
  std::function<int(int)> emit = [&](int i) -> int {
    if (i == index) return emit(p.node(i).deps.front());
    const int at = static_cast<int>(out.size());
    map[static_cast<std::size_t>(i)] = at;
    OperationNode n = p.node(i);
    out.push_back(n);
    std::vector<int> deps;
    for (int d : n.deps) deps.push_back(emit(d));
    out[static_cast<std::size_t>(at)].deps = std::move(deps);
    return at;
  };
  emit(0);
  return out;
}

}  // namespace

std::vector<int> removal_index_map(const Program& p, int index) {
  std::vector<int> map;
  splice(p, index, map);
  return map;
}

Program remove_node(const Program& p, int index) {
  if (index <= 0 || index >= p.size() || !is_removable_type(p.node(index).type)) {
    throw NotRemovable("node " + std::to_string(index) + " cannot be removed");
  }
  std::vector<int> map;
  std::vector<OperationNode> nodes = splice(p, index, map);
  try {
    return Program(std::move(nodes));
  } catch (const Error& e) {
    throw NotRemovable("removing node " + std::to_string(index) +
                       " breaks the program: " + e.what());
  }
}

std::set<int> removable_set(const Program& p) {
  std::set<int> out;
  for (int i = 1; i < p.size(); ++i) {
    if (!is_removable_type(p.node(i).type)) continue;
    try {
      remove_node(p, i);
      out.insert(i);
    } catch (const NotRemovable&) {
    }
  }
  return out;
}

}  // namespace calico
