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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <set>

#include "calico/errors.hpp"

namespace calico {

namespace {

const std::vector<std::string> kClassWords = {
    "bag",   "girl",  "table",  "cup",    "chair", "dog",   "car",   "tree",
    "man",   "woman", "shirt",  "plate",  "horse", "boat",  "lamp",  "book",
    "bottle", "window", "door", "bench",  "bird",  "fence", "sign",  "pole",
    "bowl",  "clock", "vase",   "kite"};

const std::map<std::string, std::vector<std::string>> kFamilyWords = {
    {"color",
     {"black", "white", "red", "blue", "green", "yellow", "brown", "gray", "orange",
      "pink", "purple", "tan"}},
    {"material", {"wood", "metal", "plastic", "glass", "fabric", "stone", "paper", "leather"}},
    {"size", {"small", "large", "tiny", "huge", "medium"}},
    {"shape", {"round", "square", "long", "flat", "tall", "curved"}},
    {"pattern", {"striped", "plain", "dotted", "checkered"}},
};

// A relation holds for (subject, object) when the linear form over the pair
// box features is positive; the generator keeps every form at least `margin`
// away from zero.
struct RelationDef {
  const char* name;
  RelType rtype;
  std::vector<std::pair<int, double>> coef;
  double margin;
};

const std::vector<RelationDef>& relation_defs() {
  static const std::vector<RelationDef> defs = {
      {"left_of", RelType::kSpatial, {{16, -1.0}}, 0.03},
      {"right_of", RelType::kSpatial, {{16, 1.0}}, 0.03},
      {"bigger_than", RelType::kSemantic, {{18, 1.0}, {19, 1.0}}, 0.08},
      {"smaller_than", RelType::kSemantic, {{18, -1.0}, {19, -1.0}}, 0.08},
      {"above", RelType::kSpatialSemantic, {{17, -1.0}}, 0.03},
      {"below", RelType::kSpatialSemantic, {{17, 1.0}}, 0.03},
  };
  return defs;
}

double relation_form(const RelationDef& r, const Box& s, const Box& o) {
  const auto f = pair_box_features(s, o);
  double acc = 0.0;
  for (auto [k, c] : r.coef) acc += c * f[static_cast<std::size_t>(k)];
  return acc;
}

std::string family_value_word(const std::string& family, int k) {
  auto it = kFamilyWords.find(family);
  if (it != kFamilyWords.end() && k < static_cast<int>(it->second.size())) {
    return it->second[static_cast<std::size_t>(k)];
  }
  return family + "_" + std::to_string(k);
}

// ---- oracle ------------------------------------------------------------------------

using Set = std::vector<char>;

class Oracle {
 public:
  Oracle(const GoldScene& g, const Vocabulary& v)
      : g_(g), v_(v), n_(g.size()),
        has_(static_cast<std::size_t>(g.size()),
             std::vector<char>(static_cast<std::size_t>(v.num_concepts()), 0)),
        rel_(static_cast<std::size_t>(g.size() * g.size()),
             std::vector<char>(static_cast<std::size_t>(v.num_concepts()), 0)) {
    const AttrId cls = v.class_attribute();
    for (int i = 0; i < n_; ++i) {
      const GoldObject& o = g.objects[static_cast<std::size_t>(i)];
      const ConceptId c = v.concept_id(o.cls);
      if (v.concept_info(c).attr != cls) throw UnknownSymbol("'" + o.cls + "' is not a class");
      has_[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = 1;
      for (const auto& [family, values] : o.attributes) {
        const AttrId a = v.attribute_id(family);
        for (const std::string& val : values) {
          const ConceptId vc = v.concept_id(val);
          if (v.concept_info(vc).attr != a) {
            throw UnknownSymbol("'" + val + "' is not a value of " + family);
          }
          has_[static_cast<std::size_t>(i)][static_cast<std::size_t>(vc)] = 1;
        }
      }
    }
    for (const GoldRelation& r : g.relations) {
      const ConceptId rc = v.concept_id(r.rel);
      if (!v.concept_info(rc).is_relation) throw UnknownSymbol("'" + r.rel + "' is not a relation");
      rel_[static_cast<std::size_t>(r.s * n_ + r.o)][static_cast<std::size_t>(rc)] = 1;
    }
  }

  int n() const { return n_; }
  bool has(int i, ConceptId c) const {
    return has_[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] != 0;
  }
  bool rel(int s, int o, ConceptId r) const {
    return rel_[static_cast<std::size_t>(s * n_ + o)][static_cast<std::size_t>(r)] != 0;
  }
  std::vector<ConceptId> values(int i, AttrId a) const {
    std::vector<ConceptId> out;
    for (ConceptId c : v_.candidates(a)) {
      if (has(i, c)) out.push_back(c);
    }
    return out;
  }

  struct Val {
    bool is_set = false;
    Set set;
    std::string ans;
  };

  std::string answer(const Program& p) const { return eval(p, 0).ans; }

  Val eval(const Program& p, int i) const {
    const OperationNode& node = p.node(i);
    auto sub = [&](int k) { return eval(p, node.deps[static_cast<std::size_t>(k)]); };
    Val out;
    switch (node.type) {
      case OpType::kSelect:
        return set_val([&](int j) { return has(j, *node.concept_id); });
      case OpType::kFilter: {
        const Set s = sub(0).set;
        return set_val([&](int j) { return s[j] && (has(j, *node.concept_id) != node.neg); });
      }
      case OpType::kRelateO:
      case OpType::kRelateS:
      case OpType::kRelateAe: {
        const Set s1 = sub(0).set, s2 = sub(1).set;
        return set_val([&](int j) {
          if (!s1[static_cast<std::size_t>(j)]) return false;
          for (int k = 0; k < n_; ++k) {
            if (k == j || !s2[static_cast<std::size_t>(k)]) continue;
            if (node.type == OpType::kRelateO && rel(j, k, *node.concept_id)) return true;
            if (node.type == OpType::kRelateS && rel(k, j, *node.concept_id)) return true;
            if (node.type == OpType::kRelateAe && shares(j, k, *node.attr)) return true;
          }
          return false;
        });
      }
      case OpType::kQuery:
        return ans_val(query(sub(0).set, *node.attr));
      case OpType::kQueryRelS:
      case OpType::kQueryRelO: {
        const bool swap = node.type == OpType::kQueryRelO;
        const Set a = sub(swap ? 1 : 0).set, b = sub(swap ? 0 : 1).set;
        const int i1 = unique(a), i2 = unique(b);
        if (i1 < 0 || i2 < 0) return ans_val(i1 == -1 || i2 == -1 ? "none" : "ambiguous");
        if (i1 == i2) return ans_val("ambiguous");
        std::vector<ConceptId> hold;
        for (ConceptId r : v_.relations(*node.rtype)) {
          if (rel(i1, i2, r)) hold.push_back(r);
        }
        return ans_val(hold.size() == 1 ? v_.concept_name(hold[0]) : "ambiguous");
      }
      case OpType::kVerify:
        return ans_val(verify(sub(0).set, *node.concept_id));
      case OpType::kChoose: {
        const std::string a = verify(sub(0).set, *node.concept_id);
        const std::string b = verify(sub(1).set, *node.concept_id);
        if (a == "yes" && b == "no") return ans_val(branch_label(p, node.deps[0]));
        if (a == "no" && b == "yes") return ans_val(branch_label(p, node.deps[1]));
        return ans_val("ambiguous");
      }
      case OpType::kVerifyRelS:
      case OpType::kVerifyRelO: {
        const bool swap = node.type == OpType::kVerifyRelO;
        const Set a = sub(swap ? 1 : 0).set, b = sub(swap ? 0 : 1).set;
        const int i1 = unique(a), i2 = unique(b);
        if (i1 < 0 || i2 < 0) return ans_val(i1 == -1 || i2 == -1 ? "none" : "ambiguous");
        if (i1 == i2) return ans_val("ambiguous");
        return ans_val(rel(i1, i2, *node.concept_id) ? "yes" : "no");
      }
      case OpType::kSame: {
        const Set s = sub(0).set;
        std::optional<std::vector<ConceptId>> first;
        bool same = true;
        for (int j = 0; j < n_; ++j) {
          if (!s[static_cast<std::size_t>(j)]) continue;
          const auto vals = values(j, *node.attr);
          if (!first) first = vals;
          else if (vals != *first) same = false;
        }
        if (!first) return ans_val("none");
        return ans_val(same ? "yes" : "no");
      }
      case OpType::kQueryAe: {
        const int i1 = unique(sub(0).set), i2 = unique(sub(1).set);
        if (i1 < 0 || i2 < 0) return ans_val(i1 == -1 || i2 == -1 ? "none" : "ambiguous");
        const auto a = values(i1, *node.attr), b = values(i2, *node.attr);
        if (a.empty() || b.empty()) return ans_val("ambiguous");
        return ans_val(a == b ? "yes" : "no");
      }
      case OpType::kCommon: {
        const int i1 = unique(sub(0).set), i2 = unique(sub(1).set);
        if (i1 < 0 || i2 < 0) return ans_val(i1 == -1 || i2 == -1 ? "none" : "ambiguous");
        if (i1 == i2) return ans_val("ambiguous");
        std::vector<AttrId> shared;
        const AttrId cls = v_.class_attribute();
        for (AttrId a = 0; a < v_.num_attributes(); ++a) {
          if (a == cls) continue;
          const auto x = values(i1, a), y = values(i2, a);
          if (!x.empty() && x == y) shared.push_back(a);
        }
        return ans_val(shared.size() == 1 ? v_.attribute_name(shared[0]) : "ambiguous");
      }
      case OpType::kExist: {
        const Set s = sub(0).set;
        return ans_val(std::find(s.begin(), s.end(), 1) != s.end() ? "yes" : "no");
      }
      case OpType::kIntersect:
      case OpType::kUnion: {
        const std::string a = sub(0).ans, b = sub(1).ans;
        if ((a != "yes" && a != "no") || (b != "yes" && b != "no")) return ans_val("ambiguous");
        const bool ya = a == "yes", yb = b == "yes";
        const bool r = node.type == OpType::kIntersect ? (ya && yb) : (ya || yb);
        return ans_val(r ? "yes" : "no");
      }
    }
    return out;
  }

 private:
  template <typename F>
  Val set_val(F pred) const {
    Val v;
    v.is_set = true;
    v.set.assign(static_cast<std::size_t>(n_), 0);
    for (int j = 0; j < n_; ++j) v.set[static_cast<std::size_t>(j)] = pred(j) ? 1 : 0;
    return v;
  }
  static Val ans_val(std::string a) {
    Val v;
    v.ans = std::move(a);
    return v;
  }
  // -1: empty, -2: more than one.
  static int unique(const Set& s) {
    int found = -1;
    for (int j = 0; j < static_cast<int>(s.size()); ++j) {
      if (!s[static_cast<std::size_t>(j)]) continue;
      if (found >= 0) return -2;
      found = j;
    }
    return found;
  }
  bool shares(int a, int b, AttrId attr) const {
    for (ConceptId c : v_.candidates(attr)) {
      if (has(a, c) && has(b, c)) return true;
    }
    return false;
  }
  std::string query(const Set& s, AttrId attr) const {
    std::optional<std::vector<ConceptId>> first;
    for (int j = 0; j < n_; ++j) {
      if (!s[static_cast<std::size_t>(j)]) continue;
      const auto vals = values(j, attr);
      if (vals.size() != 1) return "ambiguous";
      if (!first) first = vals;
      else if (vals != *first) return "ambiguous";
    }
    if (!first) return "none";
    return v_.concept_name((*first)[0]);
  }
  std::string verify(const Set& s, ConceptId c) const {
    int members = 0, with = 0;
    for (int j = 0; j < n_; ++j) {
      if (!s[static_cast<std::size_t>(j)]) continue;
      ++members;
      if (has(j, c)) ++with;
    }
    if (members == 0) return "none";
    if (with == members) return "yes";
    if (with == 0) return "no";
    return "ambiguous";
  }
  std::string branch_label(const Program& p, int root) const {
    const int end = p.subtree_end(root);
    for (int i = root; i < end; ++i) {
      if (p.node(i).type == OpType::kSelect) return v_.concept_name(*p.node(i).concept_id);
    }
    return "ambiguous";
  }

  const GoldScene& g_;
  const Vocabulary& v_;
  int n_;
  std::vector<std::vector<char>> has_;
  std::vector<std::vector<char>> rel_;
};

// ---- program construction -------------------------------------------------------------

struct PNode {
  OperationNode op;
  std::vector<PNode> kids;
};

void flatten(const PNode& n, std::vector<OperationNode>& out) {
  const std::size_t at = out.size();
  out.push_back(n.op);
  out[at].deps.clear();
  for (const PNode& k : n.kids) {
    out[at].deps.push_back(static_cast<int>(out.size()));
    flatten(k, out);
  }
}

PNode make(OpType t, std::optional<AttrId> attr, std::optional<ConceptId> c,
           std::optional<RelType> rt, bool neg, std::vector<PNode> kids) {
  PNode n;
  n.op.type = t;
  n.op.attr = attr;
  n.op.concept_id = c;
  n.op.rtype = rt;
  n.op.neg = neg;
  n.kids = std::move(kids);
  return n;
}

bool contains_type(const PNode& n, OpType t) {
  if (n.op.type == t) return true;
  for (const PNode& k : n.kids) {
    if (contains_type(k, t)) return true;
  }
  return false;
}

class Generator {
 public:
  Generator(const CorpusConfig& cfg, const Vocabulary& v) : cfg_(cfg), v_(v) {
    cls_attr_ = v.class_attribute();
    for (AttrId a = 0; a < v.num_attributes(); ++a) {
      const auto& c = v.candidates(a);
      const auto w = zipf_weights(static_cast<int>(c.size()), cfg.zipf);
      samplers_.emplace_back(w.begin(), w.end());
      if (a != cls_attr_) families_.push_back(a);
    }
    const auto& names = template_names();
    std::vector<double> w;
    for (const std::string& t : names) {
      auto it = cfg.template_weights.find(t);
      w.push_back(it != cfg.template_weights.end() ? it->second : default_weight(t));
    }
    template_dist_ = std::discrete_distribution<int>(w.begin(), w.end());
  }

  GoldScene make_scene(const std::string& id, std::mt19937_64& rng) const {
    std::uniform_int_distribution<int> count(cfg_.min_objects, cfg_.max_objects);
    std::uniform_real_distribution<double> size(0.08, 0.35), unit(0.0, 1.0);
    for (;;) {
      const int n = count(rng);
      std::vector<GoldObject> objs;
      bool failed = false;
      for (int i = 0; i < n && !failed; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
          GoldObject o;
          const double w = size(rng), h = size(rng);
          const double x = unit(rng) * (1.0 - w), y = unit(rng) * (1.0 - h);
          o.box = {x, y, x + w, y + h};
          objs.push_back(o);
          if (boxes_well_separated(objs)) {
            placed = true;
          } else {
            objs.pop_back();
          }
        }
        failed = !placed;
      }
      if (failed) continue;
      for (GoldObject& o : objs) {
        o.cls = v_.concept_name(sample(cls_attr_, rng));
        for (AttrId a : families_) o.attributes[v_.attribute_name(a)] = {v_.concept_name(sample(a, rng))};
      }
      GoldScene g;
      g.id = id;
      g.objects = std::move(objs);
      g.relations = geometric_relations(g.objects);
      return g;
    }
  }

  // Generates one question, optionally required to contain `must`.
  std::optional<Question> question(const GoldScene& g, std::optional<OpType> must,
                                   std::mt19937_64& rng) const {
    const Oracle oracle(g, v_);
    Ctx ctx{g, oracle, {}, {}};
    for (int i = 0; i < g.size(); ++i) {
      ctx.cls.push_back(v_.concept_id(g.objects[static_cast<std::size_t>(i)].cls));
    }
    for (int attempt = 0; attempt < 400; ++attempt) {
      const std::string tmpl = must ? template_for(*must, rng) : pick_template(rng);
      const bool over = bernoulli(cfg_.overspec, rng);
      std::optional<PNode> root = build(tmpl, ctx, over, rng);
      if (!root) continue;
      if (must && !contains_type(*root, *must)) continue;
      std::vector<OperationNode> nodes;
      flatten(*root, nodes);
      Program p(std::move(nodes), &v_);
      const std::string ans = oracle.answer(p);
      if (ans == "none" || ans == "ambiguous") continue;
      if (ctx.want && ans != *ctx.want) continue;
      if (!removal_profile_ok(p, oracle, ans, over)) continue;
      Question q;
      q.scene_id = g.id;
      q.program = std::move(p);
      q.answer = ans;
      q.tmpl = tmpl;
      q.overspecified = over;
      return q;
    }
    return std::nullopt;
  }

 private:
  struct Ctx {
    const GoldScene& g;
    const Oracle& oracle;
    std::vector<ConceptId> cls;
    std::optional<std::string> want;  // required answer (binary balancing)
  };

  static double default_weight(const std::string& t) {
    static const std::map<std::string, double> w = {
        {"exist", 0.12},   {"query", 0.25},   {"verify", 0.14},   {"choose", 0.07},
        {"query_rel", 0.07}, {"verify_rel", 0.08}, {"same", 0.05}, {"query_ae", 0.06},
        {"common", 0.05},  {"logic", 0.11}};
    return w.at(t);
  }

  static bool bernoulli(double p, std::mt19937_64& rng) {
    return std::bernoulli_distribution(p)(rng);
  }
  static int uniform(int n, std::mt19937_64& rng) {
    return std::uniform_int_distribution<int>(0, n - 1)(rng);
  }

  ConceptId sample(AttrId a, std::mt19937_64& rng) const {
    const int k = samplers_[static_cast<std::size_t>(a)](rng);
    return v_.candidates(a)[static_cast<std::size_t>(k)];
  }

  std::string pick_template(std::mt19937_64& rng) const {
    return template_names()[static_cast<std::size_t>(template_dist_(rng))];
  }

  std::string template_for(OpType t, std::mt19937_64& rng) const {
    switch (t) {
      case OpType::kQuery: return "query";
      case OpType::kQueryRelS:
      case OpType::kQueryRelO: return "query_rel";
      case OpType::kVerify: return "verify";
      case OpType::kChoose: return "choose";
      case OpType::kVerifyRelS:
      case OpType::kVerifyRelO: return "verify_rel";
      case OpType::kSame: return "same";
      case OpType::kQueryAe: return "query_ae";
      case OpType::kCommon: return "common";
      case OpType::kExist: return "exist";
      case OpType::kIntersect:
      case OpType::kUnion: return "logic";
      case OpType::kRelateAe: return bernoulli(0.5, rng) ? "query" : "verify";
      default: {
        static const char* any[] = {"query", "verify", "exist"};
        return any[uniform(3, rng)];
      }
    }
  }

  // Over-specified questions: every removable node is redundant. Otherwise
  // every removable node is essential.
  bool removal_profile_ok(const Program& p, const Oracle& o, const std::string& ans,
                          bool over) const {
    const std::set<int> rem = removable_set(p);
    if (over && rem.empty()) return false;
    for (int i : rem) {
      const bool same = o.answer(remove_node(p, i)) == ans;
      if (same != over) return false;
    }
    return true;
  }

  Set members(const Ctx& ctx, ConceptId c) const {
    Set s(static_cast<std::size_t>(ctx.g.size()), 0);
    for (int j = 0; j < ctx.g.size(); ++j) s[static_cast<std::size_t>(j)] = ctx.oracle.has(j, c);
    return s;
  }
  static int count(const Set& s) { return static_cast<int>(std::count(s.begin(), s.end(), 1)); }

  int class_count(const Ctx& ctx, ConceptId c) const { return count(members(ctx, c)); }

  ConceptId value_of(const Ctx& ctx, int obj, AttrId a) const {
    const auto vals = ctx.oracle.values(obj, a);
    return vals.empty() ? -1 : vals.front();
  }

  // Objects (other than `t`) whose class is unique in the scene and differs
  // from t's class.
  std::vector<int> anchors(const Ctx& ctx, int t) const {
    std::vector<int> out;
    for (int j = 0; j < ctx.g.size(); ++j) {
      const ConceptId c = ctx.cls[static_cast<std::size_t>(j)];
      if (j != t && c != ctx.cls[static_cast<std::size_t>(t)] && class_count(ctx, c) == 1) {
        out.push_back(j);
      }
    }
    return out;
  }

  PNode select_of(const Ctx& ctx, int obj) const {
    return make(OpType::kSelect, cls_attr_, ctx.cls[static_cast<std::size_t>(obj)], {},
                false, {});
  }

  struct Caps {
    bool exist_mode = false;  // sign-read consumer: no relate_ae, shallow negation
  };

  // One modifier true for `t`, applied on top of `chain`. `current` is the
  // chain's set; the modifier's condition set is written to `cond`.
  std::optional<PNode> modifier(const Ctx& ctx, int t, PNode chain, bool allow_neg,
                                const Caps& caps, Set& cond, std::mt19937_64& rng) const {
    const int n = ctx.g.size();
    cond.assign(static_cast<std::size_t>(n), 0);
    const double roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (roll < 0.5 || (!allow_neg && roll < 0.6)) {
      const AttrId f = families_[static_cast<std::size_t>(uniform(static_cast<int>(families_.size()), rng))];
      const ConceptId v = value_of(ctx, t, f);
      if (v < 0) return std::nullopt;
      cond = members(ctx, v);
      return make(OpType::kFilter, f, v, {}, false, {std::move(chain)});
    }
    if (roll < 0.6) {
      const AttrId f = families_[static_cast<std::size_t>(uniform(static_cast<int>(families_.size()), rng))];
      const ConceptId v = sample(f, rng);
      if (ctx.oracle.has(t, v)) return std::nullopt;
      cond = members(ctx, v);
      for (char& c : cond) c = !c;
      return make(OpType::kFilter, f, v, {}, true, {std::move(chain)});
    }
    const std::vector<int> anc = anchors(ctx, t);
    if (anc.empty()) return std::nullopt;
    const int o = anc[static_cast<std::size_t>(uniform(static_cast<int>(anc.size()), rng))];
    if (roll < 0.9 || caps.exist_mode) {
      const bool subj = roll < 0.75;  // t is the subject: relate_o
      std::vector<ConceptId> rels;
      for (const RelationDef& d : relation_defs()) {
        const ConceptId r = v_.concept_id(d.name);
        if (subj ? ctx.oracle.rel(t, o, r) : ctx.oracle.rel(o, t, r)) rels.push_back(r);
      }
      if (rels.empty()) return std::nullopt;
      const ConceptId r = rels[static_cast<std::size_t>(uniform(static_cast<int>(rels.size()), rng))];
      for (int j = 0; j < n; ++j) {
        cond[static_cast<std::size_t>(j)] =
            j != o && (subj ? ctx.oracle.rel(j, o, r) : ctx.oracle.rel(o, j, r));
      }
      return make(subj ? OpType::kRelateO : OpType::kRelateS, {}, r,
                  v_.concept_info(r).rtype, false, {std::move(chain), select_of(ctx, o)});
    }
    const AttrId f = families_[static_cast<std::size_t>(uniform(static_cast<int>(families_.size()), rng))];
    const ConceptId v = value_of(ctx, t, f);
    if (v < 0 || !ctx.oracle.has(o, v)) return std::nullopt;
    for (int j = 0; j < n; ++j) {
      cond[static_cast<std::size_t>(j)] = j != o && ctx.oracle.has(j, v);
    }
    return make(OpType::kRelateAe, f, {}, {}, false, {std::move(chain), select_of(ctx, o)});
  }

  // Reference to exactly object `t`.
  std::optional<PNode> ref_unique(const Ctx& ctx, int t, bool over, const Caps& caps,
                                  std::mt19937_64& rng) const {
    const ConceptId c = ctx.cls[static_cast<std::size_t>(t)];
    Set s = members(ctx, c);
    PNode chain = select_of(ctx, t);
    if (over) {
      if (count(s) != 1) return std::nullopt;
      const int k = bernoulli(0.35, rng) ? 2 : 1;
      for (int m = 0; m < k; ++m) {
        Set cond;
        const bool allow_neg = !caps.exist_mode || k == 1;
        std::optional<PNode> next;
        for (int tries = 0; tries < 20 && !next; ++tries) {
          next = modifier(ctx, t, chain, allow_neg, caps, cond, rng);
        }
        if (!next) return std::nullopt;
        chain = std::move(*next);
      }
      return chain;
    }
    int applied = 0;
    while (count(s) > 1) {
      if (applied == 2) return std::nullopt;
      std::optional<PNode> next;
      Set cond;
      for (int tries = 0; tries < 30 && !next; ++tries) {
        const bool allow_neg = !caps.exist_mode || applied == 0;
        next = modifier(ctx, t, chain, allow_neg, caps, cond, rng);
        if (next) {
          Set narrowed = s;
          for (std::size_t j = 0; j < s.size(); ++j) narrowed[j] = s[j] && cond[j];
          if (count(narrowed) < count(s)) {
            s = std::move(narrowed);
          } else {
            next.reset();
          }
        }
      }
      if (!next) return std::nullopt;
      if (caps.exist_mode && next->op.neg && applied > 0) return std::nullopt;
      chain = std::move(*next);
      ++applied;
    }
    return chain;
  }

  int pick_target(const Ctx& ctx, bool over, std::mt19937_64& rng) const {
    const int n = ctx.g.size();
    std::vector<int> shared, single;
    for (int j = 0; j < n; ++j) {
      (class_count(ctx, ctx.cls[static_cast<std::size_t>(j)]) > 1 ? shared : single).push_back(j);
    }
    const std::vector<int>* pool = &single;
    if (over) {
      if (single.empty()) return uniform(n, rng);
    } else if (!shared.empty() && (single.empty() || bernoulli(0.75, rng))) {
      pool = &shared;
    } else if (single.empty()) {
      pool = &shared;
    }
    return (*pool)[static_cast<std::size_t>(uniform(static_cast<int>(pool->size()), rng))];
  }

  std::pair<int, int> two_targets(const Ctx& ctx, bool over, std::mt19937_64& rng) const {
    const int a = pick_target(ctx, over, rng);
    int b = pick_target(ctx, over && bernoulli(0.5, rng), rng);
    if (b == a) b = (a + 1 + uniform(ctx.g.size() - 1, rng)) % ctx.g.size();
    return {a, b};
  }

  // Reference for an existence check answering `yes`.
  std::optional<PNode> ref_exist(const Ctx& ctx, bool yes, bool over,
                                 std::mt19937_64& rng) const {
    const Caps caps{true};
    const int n = ctx.g.size();
    if (yes) {
      const int t = uniform(n, rng);
      PNode chain = select_of(ctx, t);
      if (!over) return chain;
      const int k = bernoulli(0.35, rng) ? 2 : 1;
      for (int m = 0; m < k; ++m) {
        Set cond;
        std::optional<PNode> next;
        for (int tries = 0; tries < 20 && !next; ++tries) {
          next = modifier(ctx, t, chain, k == 1, caps, cond, rng);
        }
        if (!next) return std::nullopt;
        chain = std::move(*next);
      }
      return chain;
    }
    if (over) {
      ConceptId c = -1;
      for (int tries = 0; tries < 50; ++tries) {
        const ConceptId cand = sample(cls_attr_, rng);
        if (class_count(ctx, cand) == 0) {
          c = cand;
          break;
        }
      }
      if (c < 0) return std::nullopt;
      PNode chain = make(OpType::kSelect, cls_attr_, c, {}, false, {});
      // Any object's properties will do: the selection is already empty.
      const int t = uniform(n, rng);
      Set cond;
      std::optional<PNode> next;
      for (int tries = 0; tries < 20 && !next; ++tries) {
        next = modifier(ctx, t, chain, true, caps, cond, rng);
      }
      if (!next) return std::nullopt;
      return next;
    }
    // Present class, one modifier that no member satisfies.
    const int t = uniform(n, rng);
    const ConceptId c = ctx.cls[static_cast<std::size_t>(t)];
    const Set s = members(ctx, c);
    PNode base = select_of(ctx, t);
    for (int tries = 0; tries < 30; ++tries) {
      const double roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      const AttrId f = families_[static_cast<std::size_t>(uniform(static_cast<int>(families_.size()), rng))];
      if (roll < 0.6) {
        const ConceptId v = sample(f, rng);
        bool any = false;
        for (int j = 0; j < n; ++j) any = any || (s[static_cast<std::size_t>(j)] && ctx.oracle.has(j, v));
        if (!any) return make(OpType::kFilter, f, v, {}, false, {base});
      } else if (roll < 0.7) {
        const ConceptId v = value_of(ctx, t, f);
        bool all = true;
        for (int j = 0; j < n; ++j) all = all && (!s[static_cast<std::size_t>(j)] || ctx.oracle.has(j, v));
        if (all) return make(OpType::kFilter, f, v, {}, true, {base});
      } else {
        const std::vector<int> anc = anchors(ctx, t);
        if (anc.empty()) continue;
        const int o = anc[static_cast<std::size_t>(uniform(static_cast<int>(anc.size()), rng))];
        const RelationDef& d = relation_defs()[static_cast<std::size_t>(uniform(6, rng))];
        const ConceptId r = v_.concept_id(d.name);
        const bool subj = bernoulli(0.5, rng);
        bool any = false;
        for (int j = 0; j < n; ++j) {
          if (!s[static_cast<std::size_t>(j)] || j == o) continue;
          any = any || (subj ? ctx.oracle.rel(j, o, r) : ctx.oracle.rel(o, j, r));
        }
        if (!any) {
          return make(subj ? OpType::kRelateO : OpType::kRelateS, {}, r, d.rtype, false,
                      {base, select_of(ctx, o)});
        }
      }
    }
    return std::nullopt;
  }

  AttrId random_family(std::mt19937_64& rng) const {
    return families_[static_cast<std::size_t>(uniform(static_cast<int>(families_.size()), rng))];
  }

  std::optional<PNode> build(const std::string& tmpl, Ctx& ctx, bool over,
                             std::mt19937_64& rng) const {
    ctx.want.reset();
    const Caps att{false};
    const int n = ctx.g.size();
    if (tmpl == "exist") {
      const bool yes = bernoulli(0.5, rng);
      ctx.want = yes ? "yes" : "no";
      auto r = ref_exist(ctx, yes, over, rng);
      if (!r) return std::nullopt;
      return make(OpType::kExist, {}, {}, {}, false, {std::move(*r)});
    }
    if (tmpl == "query") {
      const int t = pick_target(ctx, over, rng);
      auto r = ref_unique(ctx, t, over, att, rng);
      if (!r) return std::nullopt;
      return make(OpType::kQuery, random_family(rng), {}, {}, false, {std::move(*r)});
    }
    if (tmpl == "verify") {
      const int t = pick_target(ctx, over, rng);
      const AttrId f = random_family(rng);
      const bool yes = bernoulli(0.5, rng);
      ctx.want = yes ? "yes" : "no";
      ConceptId c = value_of(ctx, t, f);
      if (!yes) {
        const auto& cands = v_.candidates(f);
        if (cands.size() < 2) return std::nullopt;
        do {
          c = sample(f, rng);
        } while (ctx.oracle.has(t, c));
      }
      auto r = ref_unique(ctx, t, over, att, rng);
      if (!r || c < 0) return std::nullopt;
      return make(OpType::kVerify, f, c, {}, false, {std::move(*r)});
    }
    if (tmpl == "choose") {
      auto [a, b] = two_targets(ctx, over, rng);
      if (ctx.cls[static_cast<std::size_t>(a)] == ctx.cls[static_cast<std::size_t>(b)]) {
        return std::nullopt;
      }
      const AttrId f = random_family(rng);
      const ConceptId c = value_of(ctx, a, f);
      if (c < 0 || ctx.oracle.has(b, c)) return std::nullopt;
      auto ra = ref_unique(ctx, a, over, att, rng);
      auto rb = ref_unique(ctx, b, over, att, rng);
      if (!ra || !rb) return std::nullopt;
      std::vector<PNode> kids = {std::move(*ra), std::move(*rb)};
      if (bernoulli(0.5, rng)) std::swap(kids[0], kids[1]);
      return make(OpType::kChoose, f, c, {}, false, std::move(kids));
    }
    if (tmpl == "query_rel" || tmpl == "verify_rel") {
      auto [a, b] = two_targets(ctx, over, rng);
      auto ra = ref_unique(ctx, a, over, att, rng);
      auto rb = ref_unique(ctx, b, over, att, rng);
      if (!ra || !rb) return std::nullopt;
      const RelType rt = static_cast<RelType>(uniform(kNumRelTypes, rng));
      const bool o_side = bernoulli(0.5, rng);
      // The o-side module reads its inputs swapped.
      std::vector<PNode> kids;
      if (o_side) {
        kids.push_back(std::move(*rb));
        kids.push_back(std::move(*ra));
      } else {
        kids.push_back(std::move(*ra));
        kids.push_back(std::move(*rb));
      }
      if (tmpl == "query_rel") {
        return make(o_side ? OpType::kQueryRelO : OpType::kQueryRelS, {}, {}, rt, false,
                    std::move(kids));
      }
      const bool yes = bernoulli(0.5, rng);
      ctx.want = yes ? "yes" : "no";
      const auto& rels = v_.relations(rt);
      ConceptId r = -1;
      for (ConceptId cand : rels) {
        if (ctx.oracle.rel(a, b, cand) == yes) r = cand;
      }
      if (r < 0) return std::nullopt;
      return make(o_side ? OpType::kVerifyRelO : OpType::kVerifyRelS, {}, r, rt, false,
                  std::move(kids));
    }
    if (tmpl == "same") {
      std::vector<ConceptId> multi;
      for (int j = 0; j < n; ++j) {
        const ConceptId c = ctx.cls[static_cast<std::size_t>(j)];
        if (class_count(ctx, c) >= 2 &&
            std::find(multi.begin(), multi.end(), c) == multi.end()) {
          multi.push_back(c);
        }
      }
      if (multi.empty()) return std::nullopt;
      const ConceptId c = multi[static_cast<std::size_t>(uniform(static_cast<int>(multi.size()), rng))];
      const bool yes = bernoulli(0.5, rng);
      ctx.want = yes ? "yes" : "no";
      PNode chain = make(OpType::kSelect, cls_attr_, c, {}, false, {});
      const Set s = members(ctx, c);
      if (over) {
        // A filter every member passes.
        const AttrId g = random_family(rng);
        int first = -1;
        for (int j = 0; j < n && first < 0; ++j) {
          if (s[static_cast<std::size_t>(j)]) first = j;
        }
        const ConceptId v = value_of(ctx, first, g);
        for (int j = 0; j < n; ++j) {
          if (s[static_cast<std::size_t>(j)] && !ctx.oracle.has(j, v)) return std::nullopt;
        }
        chain = make(OpType::kFilter, g, v, {}, false, {std::move(chain)});
      } else if (count(s) >= 3 && bernoulli(0.5, rng)) {
        // A filter that keeps at least two members and drops one.
        const AttrId g = random_family(rng);
        const ConceptId v = sample(g, rng);
        int kept = 0;
        for (int j = 0; j < n; ++j) kept += s[static_cast<std::size_t>(j)] && ctx.oracle.has(j, v);
        if (kept < 2 || kept == count(s)) return std::nullopt;
        chain = make(OpType::kFilter, g, v, {}, false, {std::move(chain)});
      }
      return make(OpType::kSame, random_family(rng), {}, {}, false, {std::move(chain)});
    }
    if (tmpl == "query_ae" || tmpl == "common") {
      auto [a, b] = two_targets(ctx, over, rng);
      auto ra = ref_unique(ctx, a, over, att, rng);
      auto rb = ref_unique(ctx, b, over, att, rng);
      if (!ra || !rb) return std::nullopt;
      if (tmpl == "common") {
        return make(OpType::kCommon, {}, {}, {}, false, {std::move(*ra), std::move(*rb)});
      }
      const bool yes = bernoulli(0.5, rng);
      ctx.want = yes ? "yes" : "no";
      std::vector<AttrId> fits;
      for (AttrId f : families_) {
        if ((ctx.oracle.values(a, f) == ctx.oracle.values(b, f)) == yes) fits.push_back(f);
      }
      if (fits.empty()) return std::nullopt;
      const AttrId f = fits[static_cast<std::size_t>(uniform(static_cast<int>(fits.size()), rng))];
      return make(OpType::kQueryAe, f, {}, {}, false, {std::move(*ra), std::move(*rb)});
    }
    if (tmpl == "logic") {
      const bool inter = bernoulli(0.5, rng);
      const bool yes = bernoulli(0.5, rng);
      ctx.want = yes ? "yes" : "no";
      bool c1, c2;
      if (inter == yes) {
        c1 = c2 = yes;
      } else {
        const int k = uniform(3, rng);
        c1 = k != 0 ? !yes : yes;
        c2 = k != 1 ? !yes : yes;
      }
      std::vector<PNode> kids;
      for (bool want : {c1, c2}) {
        if (bernoulli(0.6, rng)) {
          auto r = ref_exist(ctx, want, over, rng);
          if (!r) return std::nullopt;
          kids.push_back(make(OpType::kExist, {}, {}, {}, false, {std::move(*r)}));
        } else {
          const int t = pick_target(ctx, over, rng);
          const AttrId f = random_family(rng);
          ConceptId c = value_of(ctx, t, f);
          if (!want) {
            if (v_.candidates(f).size() < 2) return std::nullopt;
            do {
              c = sample(f, rng);
            } while (ctx.oracle.has(t, c));
          }
          auto r = ref_unique(ctx, t, over, att, rng);
          if (!r || c < 0) return std::nullopt;
          kids.push_back(make(OpType::kVerify, f, c, {}, false, {std::move(*r)}));
        }
      }
      return make(inter ? OpType::kIntersect : OpType::kUnion, {}, {}, {}, false,
                  std::move(kids));
    }
    throw ConfigError("unknown template '" + tmpl + "'");
  }

  const CorpusConfig& cfg_;
  const Vocabulary& v_;
  AttrId cls_attr_ = -1;
  std::vector<AttrId> families_;
  mutable std::vector<std::discrete_distribution<int>> samplers_;
  mutable std::discrete_distribution<int> template_dist_;
};

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

// ---- public API ------------------------------------------------------------------------

const std::vector<std::string>& template_names() {
  static const std::vector<std::string> names = {
      "exist", "query", "verify", "choose", "query_rel", "verify_rel",
      "same",  "query_ae", "common", "logic"};
  return names;
}

void CorpusConfig::validate() const {
  if (num_classes < 2) throw ConfigError("need at least 2 classes");
  if (families.empty()) throw ConfigError("need at least one attribute family");
  for (const auto& [name, k] : families) {
    if (k < 2) throw ConfigError("family '" + name + "' needs at least 2 values");
    if (name == Vocabulary::kClassFamily) throw ConfigError("family name 'name' is reserved");
  }
  if (!(zipf >= 0)) throw ConfigError("zipf exponent must be >= 0");
  if (num_scenes < 0 || questions_per_scene < 0) throw ConfigError("negative corpus size");
  if (min_objects < 2 || max_objects < min_objects || max_objects > 12) {
    throw ConfigError("objects per scene must satisfy 2 <= min <= max <= 12");
  }
  if (overspec < 0 || overspec > 1) throw ConfigError("overspec must be in [0, 1]");
  for (const auto& [t, w] : template_weights) {
    if (std::find(template_names().begin(), template_names().end(), t) ==
        template_names().end()) {
      throw ConfigError("unknown template '" + t + "'");
    }
    if (w < 0) throw ConfigError("template weights must be >= 0");
  }
}

nlohmann::json CorpusConfig::to_json() const {
  nlohmann::json fam = nlohmann::json::array();
  for (const auto& [name, k] : families) fam.push_back({name, k});
  return {{"num_classes", num_classes},
          {"families", fam},
          {"zipf", zipf},
          {"num_scenes", num_scenes},
          {"questions_per_scene", questions_per_scene},
          {"min_objects", min_objects},
          {"max_objects", max_objects},
          {"overspec", overspec},
          {"template_weights", template_weights},
          {"seed", seed}};
}

std::vector<double> zipf_weights(int n, double s) {
  std::vector<double> w(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    w[static_cast<std::size_t>(k)] = 1.0 / std::pow(k + 1.0, s);
    total += w[static_cast<std::size_t>(k)];
  }
  for (double& x : w) x /= total;
  return w;
}

Vocabulary synth_vocabulary(const CorpusConfig& cfg) {
  cfg.validate();
  Vocabulary v;
  const AttrId cls = v.add_attribute(std::string(Vocabulary::kClassFamily));
  for (int k = 0; k < cfg.num_classes; ++k) {
    v.add_concept(k < static_cast<int>(kClassWords.size())
                      ? kClassWords[static_cast<std::size_t>(k)]
                      : "object" + std::to_string(k),
                  cls);
  }
  for (const auto& [name, count] : cfg.families) {
    const AttrId a = v.add_attribute(name);
    for (int k = 0; k < count; ++k) v.add_concept(family_value_word(name, k), a);
  }
  for (const RelationDef& d : relation_defs()) v.add_relation(d.name, d.rtype);
  return v;
}

Vocabulary vocabulary_from_scenes(const std::vector<GoldScene>& scenes) {
  std::vector<std::string> classes;
  std::map<std::string, std::vector<std::string>> families;
  std::vector<std::string> extra_relations;
  auto push_unique = [](std::vector<std::string>& v, const std::string& x) {
    if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
  };
  for (const GoldScene& g : scenes) {
    for (const GoldObject& o : g.objects) {
      push_unique(classes, o.cls);
      for (const auto& [family, values] : o.attributes) {
        for (const std::string& x : values) push_unique(families[family], x);
      }
    }
    for (const GoldRelation& r : g.relations) {
      const auto& defs = relation_defs();
      const bool known = std::any_of(defs.begin(), defs.end(),
                                     [&](const RelationDef& d) { return d.name == r.rel; });
      if (!known) push_unique(extra_relations, r.rel);
    }
  }
  Vocabulary v;
  const AttrId cls = v.add_attribute(std::string(Vocabulary::kClassFamily));
  for (const std::string& c : classes) v.add_concept(c, cls);
  for (const auto& [family, values] : families) {
    const AttrId a = v.add_attribute(family);
    for (const std::string& x : values) v.add_concept(x, a);
  }
  for (const RelationDef& d : relation_defs()) v.add_relation(d.name, d.rtype);
  for (const std::string& r : extra_relations) v.add_relation(r, RelType::kSpatial);
  return v;
}

ModelConfig identity_model_config(const Vocabulary& vocab) {
  int f = 1;
  for (AttrId a = 0; a < vocab.num_attributes(); ++a) {
    f = std::max(f, static_cast<int>(vocab.candidates(a).size()));
  }
  int r = 1;
  for (int t = 0; t < kNumRelTypes; ++t) {
    r = std::max(r, static_cast<int>(vocab.relations(static_cast<RelType>(t)).size()));
  }
  ModelConfig mc;
  mc.dim = f + 2;
  mc.mapping_hidden = f + 1;
  mc.pair_hidden = 2 * r;
  mc.opcal = false;
  return mc;
}

bool boxes_well_separated(const std::vector<GoldObject>& objects) {
  for (std::size_t i = 0; i < objects.size(); ++i) {
    for (std::size_t j = 0; j < objects.size(); ++j) {
      if (i == j) continue;
      for (const RelationDef& d : relation_defs()) {
        if (std::fabs(relation_form(d, objects[i].box, objects[j].box)) < d.margin) {
          return false;
        }
      }
    }
  }
  return true;
}

std::vector<GoldRelation> geometric_relations(const std::vector<GoldObject>& objects) {
  std::vector<GoldRelation> out;
  const int n = static_cast<int>(objects.size());
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      for (const RelationDef& d : relation_defs()) {
        if (relation_form(d, objects[static_cast<std::size_t>(i)].box,
                          objects[static_cast<std::size_t>(j)].box) > 0) {
          out.push_back({i, j, d.name});
        }
      }
    }
  }
  return out;
}

Corpus generate(const CorpusConfig& cfg) {
  Corpus c;
  c.vocab = synth_vocabulary(cfg);
  const Generator gen(cfg, c.vocab);
  std::vector<OpType> pending;
  int qcount = 0;
  for (int s = 0; s < cfg.num_scenes; ++s) {
    std::mt19937_64 rng = derived_rng(cfg.seed, static_cast<std::uint64_t>(s));
    GoldScene g = gen.make_scene("s" + std::to_string(s), rng);
    for (int k = 0; k < cfg.questions_per_scene; ++k) {
      if (qcount % 200 == 0) {
        const auto all = all_op_types();
        pending.assign(all.begin(), all.end());
      }
      std::optional<Question> q;
      if (!pending.empty()) {
        q = gen.question(g, pending.front(), rng);
        if (q) {
          const Program& p = q->program;
          std::erase_if(pending, [&](OpType t) {
            return std::any_of(p.nodes().begin(), p.nodes().end(),
                               [t](const OperationNode& n) { return n.type == t; });
          });
        }
      }
      if (!q) q = gen.question(g, std::nullopt, rng);
      if (!q) continue;
      q->qid = "q" + std::to_string(qcount++);
      c.questions.push_back(std::move(*q));
    }
    c.scenes.push_back(std::move(g));
  }
  return c;
}

std::string oracle_answer(const GoldScene& g, const Program& p, const Vocabulary& vocab) {
  validate_gold_scene(g);
  return Oracle(g, vocab).answer(p);
}

Scene perceive(const GoldScene& g, const Vocabulary& vocab, double signal, double noise,
               std::mt19937_64& rng) {
  return perceive(g, vocab, signal, signal, noise, rng);
}

Scene perceive(const GoldScene& g, const Vocabulary& vocab, double class_signal,
               double attribute_signal, double noise, std::mt19937_64& rng) {
  Scene gold = gold_to_features(g, vocab);
  gold.score_kind = "softmax";
  std::normal_distribution<double> eps(0.0, 1.0);
  std::vector<std::vector<int>> blocks;
  std::vector<double> signals;
  for (AttrId a = 0; a < vocab.num_attributes(); ++a) {
    std::vector<int> idx;
    for (ConceptId c : vocab.candidates(a)) idx.push_back(vocab.feature_index(c));
    blocks.push_back(std::move(idx));
    signals.push_back(a == vocab.class_attribute() ? class_signal : attribute_signal);
  }
  for (SceneObject& o : gold.objects) {
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& idx = blocks[b];
      const double signal = signals[b];
      std::vector<double> z;
      double mx = -1e300;
      for (int k : idx) {
        z.push_back(signal * o.features[static_cast<std::size_t>(k)] + noise * eps(rng));
        mx = std::max(mx, z.back());
      }
      double total = 0.0;
      for (double& x : z) {
        x = std::exp(x - mx);
        total += x;
      }
      for (std::size_t k = 0; k < idx.size(); ++k) {
        o.features[static_cast<std::size_t>(idx[k])] = z[k] / total;
      }
    }
  }
  return gold;
}

// ---- question files -----------------------------------------------------------------------

nlohmann::json question_to_json(const Question& q, const Vocabulary& vocab) {
  return {{"qid", q.qid},
          {"scene", q.scene_id},
          {"program", program_to_json(q.program, vocab)},
          {"text", serialize_program(q.program, vocab)},
          {"answer", q.answer},
          {"template", q.tmpl},
          {"over", q.overspecified}};
}

Question question_from_json(const nlohmann::json& j, const Vocabulary& vocab) {
  Question q;
  try {
    q.qid = j.at("qid").get<std::string>();
    q.scene_id = j.value("scene", std::string());
    const auto& p = j.at("program");
    q.program = p.is_string() ? parse_program(p.get<std::string>(), vocab)
                              : program_from_json(p, vocab);
    q.answer = j.at("answer").get<std::string>();
    q.tmpl = j.value("template", std::string());
    q.overspecified = j.value("over", false);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed question: ") + e.what());
  }
  return q;
}

void write_questions(const std::string& path, const std::vector<Question>& qs,
                     const Vocabulary& vocab) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const Question& q : qs) out << question_to_json(q, vocab).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<Question> load_questions(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Question> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(question_from_json(nlohmann::json::parse(line), vocab));
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(path + ":" + std::to_string(n) + ": " + e.what());
    } catch (const Error& e) {
      throw SchemaError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

// ---- fixtures and hand-set parameters ----------------------------------------------------

Fig2Fixture adversarial_scene_fig2() {
  Fig2Fixture f;
  const AttrId name = f.vocab.add_attribute(std::string(Vocabulary::kClassFamily));
  f.vocab.add_concept("bag", name);
  f.vocab.add_concept("girl", name);
  const AttrId color = f.vocab.add_attribute("color");
  f.vocab.add_concept("black", color);
  f.vocab.add_concept("white", color);
  for (const RelationDef& d : relation_defs()) f.vocab.add_relation(d.name, d.rtype);

  f.scene.id = "fig2";
  GoldObject girl;
  girl.box = {0.10, 0.20, 0.35, 0.90};
  girl.cls = "girl";
  GoldObject bag;
  bag.box = {0.55, 0.55, 0.75, 0.80};
  bag.cls = "bag";
  bag.attributes["color"] = {"black"};
  f.scene.objects = {girl, bag};
  f.scene.relations = geometric_relations(f.scene.objects);
  f.program = parse_program("exist(filter[color](black, neg; select[name](bag)))", f.vocab);
  f.answer = "no";
  return f;
}

ModuleSuite module_suite() {
  ModuleSuite m;
  const AttrId name = m.vocab.add_attribute(std::string(Vocabulary::kClassFamily));
  for (const char* c : {"bag", "girl", "cup"}) m.vocab.add_concept(c, name);
  const AttrId color = m.vocab.add_attribute("color");
  for (const char* c : {"black", "white", "red"}) m.vocab.add_concept(c, color);
  const AttrId material = m.vocab.add_attribute("material");
  for (const char* c : {"leather", "metal"}) m.vocab.add_concept(c, material);
  for (const RelationDef& d : relation_defs()) m.vocab.add_relation(d.name, d.rtype);

  auto obj = [](Box b, std::string cls, std::string c, std::string mat) {
    GoldObject o;
    o.box = b;
    o.cls = std::move(cls);
    o.attributes["color"] = {std::move(c)};
    o.attributes["material"] = {std::move(mat)};
    return o;
  };
  m.scene.id = "suite";
  m.scene.objects = {obj({0.55, 0.50, 0.75, 0.80}, "bag", "black", "leather"),
                     obj({0.10, 0.15, 0.35, 0.95}, "girl", "white", "leather"),
                     obj({0.62, 0.10, 0.72, 0.25}, "cup", "red", "metal"),
                     obj({0.85, 0.60, 0.95, 0.70}, "cup", "red", "metal")};
  m.scene.relations = geometric_relations(m.scene.objects);
  const char* programs[] = {
      "intersect(exist(relate_ae[material](relate_o(right_of; filter[color](white, neg; "
      "select[name](bag)), select[name](girl)), relate_s(above; select[name](girl), "
      "select[name](bag)))), verify_rel_o(above; select[name](bag), select[name](girl)))",
      "union(same[color](select[name](cup)), query_ae[material](select[name](bag), "
      "select[name](girl)))",
      "union(verify[color](black; select[name](bag)), verify_rel_s(left_of; "
      "select[name](girl), select[name](bag)))",
      "query[color](filter[color](black; select[name](bag)))",
      "query_rel_s[spatial](select[name](girl), select[name](bag))",
      "query_rel_o[semantic](select[name](girl), select[name](bag))",
      "choose[color](white; select[name](bag), select[name](girl))",
      "common(select[name](bag), select[name](girl))",
  };
  for (const char* text : programs) {
    m.programs.push_back(parse_program(text, m.vocab));
    m.answers.push_back(oracle_answer(m.scene, m.programs.back(), m.vocab));
  }
  return m;
}

namespace {

// Mapping network for family `a` that sends value k to targets[k] and an
// object without a value in the family to `none`.
void set_mapping_targets(Model& model, AttrId a, const std::vector<std::vector<double>>& targets,
                         const std::vector<double>& none) {
  const Vocabulary& v = model.vocab();
  const MappingNetwork& m = model.mapping(a);
  ad::ParamStore& P = model.params();
  const auto& cands = v.candidates(a);
  const int f = static_cast<int>(cands.size());
  const int dim = model.config().dim;
  if (model.config().mapping_hidden < f + 1) {
    throw ConfigError("mapping_hidden must be at least " + std::to_string(f + 1));
  }
  if (model.feature_dim() != v.feature_dim()) {
    throw ConfigError("hand-set mappings need the symbolic feature layout");
  }
  ad::Tensor& gate = P.value(m.gate);
  for (double& g : gate.data) g = -40.0;
  ad::Tensor& w1 = P.value(m.hidden.weight);
  ad::Tensor& b1 = P.value(m.hidden.bias);
  ad::Tensor& w2 = P.value(m.out.weight);
  ad::Tensor& b2 = P.value(m.out.bias);
  w1 = ad::Tensor(w1.rows, w1.cols, 0.0);
  b1 = ad::Tensor(b1.rows, b1.cols, 0.0);
  w2 = ad::Tensor(w2.rows, w2.cols, 0.0);
  b2 = ad::Tensor(b2.rows, b2.cols, 0.0);
  for (int k = 0; k < f; ++k) {
    const int idx = v.feature_index(cands[static_cast<std::size_t>(k)]);
    gate[idx] = 40.0;
    w1(idx, k) = 1.0;
    w1(idx, f) = -1.0;  // unit f fires only when the family is absent
    for (int d = 0; d < dim; ++d) w2(k, d) = targets[static_cast<std::size_t>(k)][static_cast<std::size_t>(d)];
  }
  b1(0, f) = 1.0;
  for (int d = 0; d < dim; ++d) w2(f, d) = none[static_cast<std::size_t>(d)];
  ad::Tensor& ws = P.value(m.spatial.weight);
  ad::Tensor& bs = P.value(m.spatial.bias);
  ws = ad::Tensor(ws.rows, ws.cols, 0.0);
  bs = ad::Tensor(bs.rows, bs.cols, 0.0);
}

// Directions onehot_k - gamma over the first `f + 1` coordinates, padded so
// the row has the requested norm.
void set_indicator_directions(Model& model, const std::vector<ConceptId>& ids, double gamma,
                              double norm) {
  ad::Tensor& dirs = model.params().value(model.concepts().directions());
  const int f = static_cast<int>(ids.size());
  const int dim = model.config().dim;
  if (dim < f + 2) throw ConfigError("dim must be at least " + std::to_string(f + 2));
  for (int k = 0; k < f; ++k) {
    const ConceptId c = ids[static_cast<std::size_t>(k)];
    for (int d = 0; d < dim; ++d) dirs(c, d) = 0.0;
    double sq = 0.0;
    for (int d = 0; d <= f; ++d) {
      dirs(c, d) = (d == k ? 1.0 : 0.0) - gamma;
      sq += dirs(c, d) * dirs(c, d);
    }
    dirs(c, f + 1) = std::sqrt(std::max(0.0, norm * norm - sq));
  }
}

}  // namespace

void configure_identity(Model& model) {
  const Vocabulary& v = model.vocab();
  const int dim = model.config().dim;
  const AttrId cls = v.class_attribute();
  ad::ParamStore& P = model.params();

  for (AttrId a = 0; a < v.num_attributes(); ++a) {
    const int f = static_cast<int>(v.candidates(a).size());
    std::vector<std::vector<double>> targets;
    for (int k = 0; k < f; ++k) {
      std::vector<double> t(static_cast<std::size_t>(dim), 0.0);
      t[static_cast<std::size_t>(k)] = 1.0;
      targets.push_back(std::move(t));
    }
    std::vector<double> none(static_cast<std::size_t>(dim), 0.0);
    none[static_cast<std::size_t>(f)] = 1.0;
    set_mapping_targets(model, a, targets, none);
    // Object names score true matches lower and mismatches higher than
    // attribute values do, so that merged chains keep the right sign.
    if (a == cls) {
      set_indicator_directions(model, v.candidates(a), 0.95, 0.05 / 0.0105);
    } else {
      set_indicator_directions(model, v.candidates(a), 0.85, 0.15 / 0.0265);
    }
  }

  const double kappa = 100.0;
  const int in_offset = 2 * model.feature_dim();
  for (int t = 0; t < kNumRelTypes; ++t) {
    const RelType rt = static_cast<RelType>(t);
    const auto& rels = v.relations(rt);
    const PairNetwork& pn = model.pair(rt);
    ad::Tensor& w1 = P.value(pn.hidden.weight);
    ad::Tensor& b1 = P.value(pn.hidden.bias);
    ad::Tensor& w2 = P.value(pn.out.weight);
    ad::Tensor& b2 = P.value(pn.out.bias);
    w1 = ad::Tensor(w1.rows, w1.cols, 0.0);
    b1 = ad::Tensor(b1.rows, b1.cols, 0.0);
    w2 = ad::Tensor(w2.rows, w2.cols, 0.0);
    b2 = ad::Tensor(b2.rows, b2.cols, 0.0);
    if (model.config().pair_hidden < 2 * static_cast<int>(rels.size())) {
      throw ConfigError("pair_hidden too small for the relation set");
    }
    for (std::size_t k = 0; k < rels.size(); ++k) {
      const std::string& name = v.concept_name(rels[k]);
      auto it = std::find_if(relation_defs().begin(), relation_defs().end(),
                             [&](const RelationDef& d) { return name == d.name; });
      if (it == relation_defs().end()) {
        throw ConfigError("no geometric definition for relation '" + name + "'");
      }
      // clip(kappa * form + 0.5, 0, 1) as a difference of two ReLUs.
      const int u = 2 * static_cast<int>(k);
      for (auto [idx, c] : it->coef) {
        w1(in_offset + idx, u) = kappa * c;
        w1(in_offset + idx, u + 1) = kappa * c;
      }
      b1(0, u) = 0.5;
      b1(0, u + 1) = -0.5;
      w2(u, static_cast<int>(k)) = 1.0;
      w2(u + 1, static_cast<int>(k)) = -1.0;
    }
    set_indicator_directions(model, rels, 0.85, 0.15 / 0.0265);
  }

  ad::Tensor& mags = P.value(model.concepts().magnitudes());
  for (double& x : mags.data) x = 1.0;
  P.value(model.same_offset()) = ad::Tensor::scalar(0.95);
  ModelConfig& rc = model.runtime_config();
  rc.opcal = false;
  rc.tau = 1e-5;
  rc.binary_threshold = 0.0;
}

void configure_fig2_demo(Model& model) {
  const Vocabulary& v = model.vocab();
  const int dim = model.config().dim;
  if (dim < 4) throw ConfigError("dim must be at least 4");
  auto unit = [&](int d, double x) {
    std::vector<double> t(static_cast<std::size_t>(dim), 0.0);
    t[static_cast<std::size_t>(d)] = x;
    return t;
  };
  ad::Tensor& dirs = model.params().value(model.concepts().directions());
  for (AttrId a = 0; a < v.num_attributes(); ++a) {
    const auto& cands = v.candidates(a);
    std::vector<std::vector<double>> targets;
    for (std::size_t k = 0; k < cands.size(); ++k) {
      if (a == v.class_attribute()) {
        // The first class maps onto its direction, the rest point away.
        targets.push_back(unit(0, k == 0 ? 1.0 : -1.0));
      } else {
        // Values share a common component, so their cosine with the
        // direction of the first value is only 0.6.
        std::vector<double> t = unit(0, k == 0 ? 0.6 : -0.6);
        t[1] = 0.8;
        targets.push_back(std::move(t));
      }
      for (int d = 0; d < dim; ++d) dirs(cands[k], d) = 0.0;
      dirs(cands[k], 0) = k == 0 ? 1.0 : -1.0;
    }
    set_mapping_targets(model, a, targets, unit(2, 1.0));
  }
  ad::Tensor& mags = model.params().value(model.concepts().magnitudes());
  for (double& x : mags.data) x = 1.0;
  ModelConfig& rc = model.runtime_config();
  rc.opcal = false;
  rc.binary_threshold = 0.0;
}

ProgramSampler::ProgramSampler(const Vocabulary& v, std::uint64_t seed) : v_(v), rng_(seed) {}

Program ProgramSampler::next() {
  std::vector<OperationNode> nodes;
  build_output(nodes, 0);
  return Program(std::move(nodes), &v_);
}

int ProgramSampler::pick(int n) { return std::uniform_int_distribution<int>(0, n - 1)(rng_); }

ConceptId ProgramSampler::value_of(AttrId a) {
  const auto& c = v_.candidates(a);
  return c[static_cast<std::size_t>(pick(static_cast<int>(c.size())))];
}

int ProgramSampler::build_output(std::vector<OperationNode>& nodes, int depth) {
  static const OpType outputs[] = {
      OpType::kQuery,     OpType::kQueryRelS,  OpType::kQueryRelO, OpType::kVerify,
      OpType::kChoose,    OpType::kVerifyRelS, OpType::kVerifyRelO, OpType::kSame,
      OpType::kQueryAe,   OpType::kCommon,     OpType::kExist,     OpType::kIntersect,
      OpType::kUnion};
  OpType t = outputs[pick(13)];
  // Children of intersect/union must answer yes/no.
  while (depth > 0 && (signature(t).scalar_inputs ||
                       signature(t).output != OutputKind::kBinary)) {
    t = outputs[pick(13)];
  }
  return build(nodes, t, depth);
}

int ProgramSampler::build_dist(std::vector<OperationNode>& nodes, int depth) {
  static const OpType dists[] = {OpType::kSelect, OpType::kFilter, OpType::kRelateO,
                                 OpType::kRelateS, OpType::kRelateAe};
  return build(nodes, depth > 3 ? OpType::kSelect : dists[pick(5)], depth);
}

int ProgramSampler::build(std::vector<OperationNode>& nodes, OpType t, int depth) {
  const OpSignature& sig = signature(t);
  const int at = static_cast<int>(nodes.size());
  nodes.push_back({});
  OperationNode n;
  n.type = t;
  if (sig.bracket == ArgKind::kAttribute) n.attr = pick(v_.num_attributes());
  if (sig.bracket == ArgKind::kRelType) {
    n.rtype = static_cast<RelType>(pick(kNumRelTypes));
  }
  if (sig.concept_kind == ConceptKind::kAttributeValue) n.concept_id = value_of(*n.attr);
  if (sig.concept_kind == ConceptKind::kRelation) {
    const auto& rels = v_.relations(*n.rtype);
    n.concept_id = rels[static_cast<std::size_t>(pick(static_cast<int>(rels.size())))];
  }
  n.neg = sig.negatable && pick(2) == 0;
  for (int k = 0; k < sig.arity; ++k) {
    n.deps.push_back(sig.scalar_inputs ? build_output(nodes, depth + 1)
                                       : build_dist(nodes, depth + 1));
  }
  nodes[static_cast<std::size_t>(at)] = std::move(n);
  return at;
}

}  // namespace calico
