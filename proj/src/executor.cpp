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

#include "calico/executor.hpp"

#include <cmath>
#include <fstream>

#include "calico/errors.hpp"

namespace calico {

// ---- configuration ---------------------------------------------------------------

nlohmann::json ModelConfig::to_json() const {
  return {{"dim", dim},
          {"mapping_hidden", mapping_hidden},
          {"pair_hidden", pair_hidden},
          {"feature_dim", feature_dim},
          {"mode", std::string(mode_name(mode))},
          {"opcal", opcal},
          {"tau", tau},
          {"binary_threshold", binary_threshold},
          {"binary_bias", binary_bias},
          {"calibrator",
           {{"type_dim", calibrator.type_dim},
            {"attr_dim", calibrator.attr_dim},
            {"concept_dim", calibrator.concept_dim},
            {"hidden", calibrator.hidden},
            {"share_concepts", calibrator.share_concepts}}},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.dim = j.at("dim").get<int>();
    c.mapping_hidden = j.at("mapping_hidden").get<int>();
    c.pair_hidden = j.at("pair_hidden").get<int>();
    c.feature_dim = j.value("feature_dim", 0);
    auto m = mode_from_name(j.at("mode").get<std::string>());
    if (!m) throw SchemaError("unknown mode " + j.at("mode").dump());
    c.mode = *m;
    c.opcal = j.at("opcal").get<bool>();
    c.tau = j.at("tau").get<double>();
    c.binary_threshold = j.value("binary_threshold", 0.0);
    c.binary_bias = j.value("binary_bias", true);
    const auto& cal = j.at("calibrator");
    c.calibrator.type_dim = cal.at("type_dim").get<int>();
    c.calibrator.attr_dim = cal.at("attr_dim").get<int>();
    c.calibrator.concept_dim = cal.at("concept_dim").get<int>();
    c.calibrator.hidden = cal.at("hidden").get<int>();
    c.calibrator.share_concepts = cal.value("share_concepts", false);
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

// ---- networks ------------------------------------------------------------------------

MappingNetwork MappingNetwork::create(ad::ParamStore& store, const std::string& prefix,
                                      int feature_dim, int hidden, int dim,
                                      ad::Rng& rng) {
  MappingNetwork m;
  m.gate = store.add(prefix + ".gate", ad::Tensor(1, feature_dim, 0.0));
  m.hidden = ad::Linear::create(store, prefix + ".l1", feature_dim, hidden, rng);
  m.out = ad::Linear::create(store, prefix + ".l2", hidden, dim, rng);
  m.spatial = ad::Linear::create(store, prefix + ".spatial", kBoxFeatureDim, dim, rng);
  store.value(m.out.bias) = ad::gaussian(1, dim, 0.1, rng);
  return m;
}

ad::Var MappingNetwork::embed(ad::Tape& tape, const ad::ParamStore& store,
                              ad::Var features, ad::Var boxes) const {
  ad::Var gated = ad::mul(features, ad::sigmoid(tape.param(store, gate)));
  ad::Var h = ad::relu(hidden(tape, store, gated));
  return ad::add(out(tape, store, h), spatial(tape, store, boxes));
}

PairNetwork PairNetwork::create(ad::ParamStore& store, const std::string& prefix,
                                int input, int hidden, int dim, ad::Rng& rng) {
  PairNetwork p;
  p.hidden = ad::Linear::create(store, prefix + ".l1", input, hidden, rng);
  p.out = ad::Linear::create(store, prefix + ".l2", hidden, dim, rng);
  // Nonzero so that a pair with every hidden unit inactive still embeds.
  store.value(p.out.bias) = ad::gaussian(1, dim, 0.1, rng);
  return p;
}

ad::Var PairNetwork::embed(ad::Tape& tape, const ad::ParamStore& store, ad::Var features,
                           ad::Var pair_boxes) const {
  // The first layer over [v_i, v_j, pb_ij] splits into per-object terms and
  // a pair-geometry term, so only the latter is computed N^2 times.
  const int n = features.rows(), f = features.cols();
  const ad::Var w = tape.param(store, hidden.weight);
  const ad::Var subj = ad::matmul(features, ad::slice_rows(w, 0, f));
  const ad::Var obj = ad::matmul(features, ad::slice_rows(w, f, f));
  const ad::Var geo =
      ad::matmul(pair_boxes, ad::slice_rows(w, 2 * f, w.rows() - 2 * f));
  std::vector<int> is, js;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      is.push_back(i);
      js.push_back(j);
    }
  }
  ad::Var h = ad::add(ad::add(ad::gather_rows(subj, std::move(is)),
                              ad::gather_rows(obj, std::move(js))),
                      geo);
  h = ad::add(h, tape.param(store, hidden.bias));
  return out(tape, store, ad::relu(h));
}

// ---- model ---------------------------------------------------------------------------

Model::Model(Vocabulary vocab, ModelConfig cfg) : vocab_(std::move(vocab)), cfg_(cfg) {
  if (cfg_.dim <= 0 || cfg_.mapping_hidden <= 0 || cfg_.pair_hidden <= 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (!(cfg_.tau > 0)) throw ConfigError("tau must be positive");
  feature_dim_ = cfg_.feature_dim > 0 ? cfg_.feature_dim : vocab_.feature_dim();
  if (feature_dim_ <= 0) throw ConfigError("vocabulary has no feature layout");
  ad::Rng rng(cfg_.seed);
  concepts_ = ConceptStore::create(params_, vocab_.num_concepts(), cfg_.dim, rng);
  for (AttrId a = 0; a < vocab_.num_attributes(); ++a) {
    mapping_.push_back(MappingNetwork::create(params_, "map." + vocab_.attribute_name(a),
                                              feature_dim_, cfg_.mapping_hidden,
                                              cfg_.dim, rng));
  }
  for (int t = 0; t < kNumRelTypes; ++t) {
    pair_.push_back(PairNetwork::create(
        params_, "pair." + std::string(rel_type_name(static_cast<RelType>(t))),
        2 * feature_dim_ + kPairBoxFeatureDim, cfg_.pair_hidden, cfg_.dim, rng));
  }
  calibrator_ = OpCalibrator::create(params_, vocab_, cfg_.calibrator, concepts_, rng);
  same_offset_ = params_.add("same.offset", ad::Tensor::scalar(0.0));
  binary_bias_ = params_.add("binary.bias", ad::Tensor(1, kNumOpTypes, 0.0));
  const auto cls = vocab_.find_attribute(Vocabulary::kClassFamily);
  for (AttrId a = 0; a < vocab_.num_attributes(); ++a) {
    if (!cls || a != *cls) common_families_.push_back(a);
  }
}

void Model::save(const std::string& path, nlohmann::json extra_meta) const {
  nlohmann::json meta = extra_meta.is_object() ? std::move(extra_meta)
                                               : nlohmann::json::object();
  meta["config"] = cfg_.to_json();
  meta["vocab"] = vocab_.to_json();
  params_.save(path, meta);
}

Model Model::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  const nlohmann::json meta = j.value("meta", nlohmann::json());
  if (!meta.is_object() || !meta.contains("config") || !meta.contains("vocab")) {
    throw SchemaError(path + ": checkpoint has no model metadata");
  }
  Model m(Vocabulary::from_json(meta["vocab"]), ModelConfig::from_json(meta["config"]));
  m.params_.load_json(j, true);
  return m;
}

// ---- helpers ---------------------------------------------------------------------------

ad::Var merge(std::span<const ad::Var> ds, std::optional<std::span<const double>> weights) {
  if (ds.empty()) throw ShapeError("merge of no distributions");
  for (const ad::Var& d : ds) {
    if (!d.value().same_shape(ds[0].value())) {
      throw ShapeError("merge of distributions with different lengths");
    }
  }
  if (weights && weights->size() != ds.size()) {
    throw ShapeError("merge needs one weight per distribution");
  }
  ad::Var acc = weights ? ad::scale(ds[0], (*weights)[0]) : ds[0];
  for (std::size_t k = 1; k < ds.size(); ++k) {
    acc = ad::add(acc, weights ? ad::scale(ds[k], (*weights)[k]) : ds[k]);
  }
  return weights ? acc : ad::scale(acc, 1.0 / static_cast<double>(ds.size()));
}

ad::Var attention(ad::Var d, double tau) { return ad::softmax(ad::scale(d, 1.0 / tau)); }

namespace {

std::vector<double> values_of(ad::Var v) { return v.value().data; }

int argmax(const std::vector<double>& v) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(v.size()); ++k) {
    if (v[static_cast<std::size_t>(k)] > v[static_cast<std::size_t>(best)]) best = k;
  }
  return best;
}

class Context {
 public:
  Context(const Model& m, const Scene& s, ad::Tape& tape)
      : concepts(tape, m.params(), m.concepts(), m.config().mode),
        model_(m),
        scene_(s),
        tape_(tape),
        store_(m.params()),
        n_(s.size()),
        attr_emb_(static_cast<std::size_t>(m.vocab().num_attributes())),
        pair_emb_(kNumRelTypes) {
    validate_scene(s);
    if (s.feature_dim() != m.feature_dim()) {
      throw ShapeError("scene features have width " + std::to_string(s.feature_dim()) +
                       ", model expects " + std::to_string(m.feature_dim()));
    }
    const int f = m.feature_dim();
    ad::Tensor v(n_, f), b(n_, kBoxFeatureDim);
    for (int i = 0; i < n_; ++i) {
      const SceneObject& o = s.objects[static_cast<std::size_t>(i)];
      for (int k = 0; k < f; ++k) v(i, k) = o.features[static_cast<std::size_t>(k)];
      const auto bf = box_features(o.box);
      for (int k = 0; k < kBoxFeatureDim; ++k) b(i, k) = bf[static_cast<std::size_t>(k)];
    }
    features_ = tape.constant(std::move(v));
    boxes_ = tape.constant(std::move(b));
  }

  int n() const { return n_; }
  ad::Tape& tape() { return tape_; }
  const ad::ParamStore& store() const { return store_; }

  ad::Var embeddings(AttrId a) {
    ad::Var& slot = attr_emb_.at(static_cast<std::size_t>(a));
    if (!slot.valid()) slot = model_.mapping(a).embed(tape_, store_, features_, boxes_);
    return slot;
  }

  // Row i * N + j holds the embedding of the ordered pair (i, j).
  ad::Var pair_embeddings(RelType t) {
    ad::Var& slot = pair_emb_[static_cast<std::size_t>(t)];
    if (!slot.valid()) {
      if (!pair_inputs_.valid()) build_pair_inputs();
      slot = model_.pair(t).embed(tape_, store_, features_, pair_inputs_);
    }
    return slot;
  }

  ConceptView concepts;

 private:
  void build_pair_inputs() {
    ad::Tensor in(n_ * n_, kPairBoxFeatureDim);
    for (int i = 0; i < n_; ++i) {
      for (int j = 0; j < n_; ++j) {
        const auto pf = pair_box_features(scene_.objects[static_cast<std::size_t>(i)].box,
                                          scene_.objects[static_cast<std::size_t>(j)].box);
        for (int k = 0; k < kPairBoxFeatureDim; ++k) {
          in(i * n_ + j, k) = pf[static_cast<std::size_t>(k)];
        }
      }
    }
    pair_inputs_ = tape_.constant(std::move(in));
  }

  const Model& model_;
  const Scene& scene_;
  ad::Tape& tape_;
  const ad::ParamStore& store_;
  int n_;
  ad::Var features_;
  ad::Var boxes_;
  ad::Var pair_inputs_;
  std::vector<ad::Var> attr_emb_;
  std::vector<ad::Var> pair_emb_;
};

// Pooled pair embedding sum_ij att(d1)_i att(d2)_j e_ij.
ad::Var pool_pairs(Context& ctx, RelType t, ad::Var d1, ad::Var d2, double tau) {
  const int n = ctx.n();
  ad::Var w = ad::matmul(ad::transpose(attention(d1, tau)), attention(d2, tau));
  return ad::matmul(ad::reshape(w, 1, n * n), ctx.pair_embeddings(t));
}

// N x N matrix with entry (i, j) = sim(e_ij, rel).
ad::Var relation_mask(Context& ctx, const OperationNode& node) {
  const int n = ctx.n();
  ad::Var s = ctx.concepts.similarities(ctx.pair_embeddings(*node.rtype),
                                        *node.concept_id, node.type);
  return ad::reshape(s, n, n);
}

std::string first_select_label(const Program& p, int root, const Vocabulary& vocab) {
  const int end = p.subtree_end(root);
  for (int i = root; i < end; ++i) {
    const OperationNode& n = p.node(i);
    if (n.type == OpType::kSelect) return vocab.concept_name(*n.concept_id);
  }
  return "branch" + std::to_string(root);
}

}  // namespace

ExecResult execute(const Model& model, const Program& p, const Scene& scene,
                   ad::Tape& tape, const ExecOptions& opts) {
  const ModelConfig& cfg = model.config();
  const Vocabulary& vocab = model.vocab();
  const ad::ParamStore& store = model.params();
  const double tau = cfg.tau;
  Context ctx(model, scene, tape);
  const int m = p.size();

  std::optional<OpCalibrator::Output> cal;
  if (cfg.opcal) cal = model.calibrator().predict(tape, store, p);

  // Weight applied to node j's output where its parent consumes it.
  std::vector<ad::Var> weight(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    if (auto it = opts.weight_overrides.find(j); it != opts.weight_overrides.end()) {
      weight[static_cast<std::size_t>(j)] = tape.scalar(it->second);
    } else if (cal) {
      weight[static_cast<std::size_t>(j)] = ad::pick(cal->weights, j);
    }
  }

  std::vector<ad::Var> out(static_cast<std::size_t>(m));
  std::vector<NodeTrace> trace(opts.trace ? static_cast<std::size_t>(m) : 0);
  ExecResult res;

  for (int i = m - 1; i >= 0; --i) {
    const OperationNode& node = p.node(i);
    std::vector<ad::Var> in;
    for (int d : node.deps) {
      const ad::Var w = weight[static_cast<std::size_t>(d)];
      ad::Var x = out[static_cast<std::size_t>(d)];
      in.push_back(w.valid() ? ad::mul(x, w) : x);
    }
    auto own = [&](ad::Var r) {
      if (auto it = opts.result_scale.find(i); it != opts.result_scale.end()) {
        r = ad::scale(r, it->second);
      }
      return r;
    };
    ad::Var result;  // own d_res or answer scores
    ad::Var output;
    switch (node.type) {
      case OpType::kSelect:
        result = own(ctx.concepts.similarities(ctx.embeddings(*node.attr),
                                               *node.concept_id, node.type));
        output = result;
        break;
      case OpType::kFilter: {
        ad::Var r = ctx.concepts.similarities(ctx.embeddings(*node.attr),
                                              *node.concept_id, node.type);
        result = own(node.neg ? ad::neg(r) : r);
        const ad::Var parts[] = {in[0], result};
        output = merge(parts);
        break;
      }
      case OpType::kRelateO:
      case OpType::kRelateS: {
        ad::Var mask = relation_mask(ctx, node);
        if (node.type == OpType::kRelateO) mask = ad::transpose(mask);
        result = own(ad::matmul(attention(in[1], tau), mask));
        const ad::Var parts[] = {in[0], result};
        output = merge(parts);
        break;
      }
      case OpType::kRelateAe: {
        ad::Var e = ad::l2_normalize_rows(ctx.embeddings(*node.attr));
        ad::Var mask = ad::matmul(e, ad::transpose(e));
        result = own(ad::matmul(attention(in[1], tau), mask));
        const ad::Var parts[] = {in[0], result};
        output = merge(parts);
        break;
      }
      case OpType::kQuery: {
        ad::Var e = ad::matmul(attention(in[0], tau), ctx.embeddings(*node.attr));
        const auto& cands = vocab.candidates(*node.attr);
        result = own(ctx.concepts.answer_scores(e, cands, node.type));
        for (ConceptId c : cands) res.labels.push_back(vocab.concept_name(c));
        output = result;
        break;
      }
      case OpType::kQueryRelS:
      case OpType::kQueryRelO: {
        const bool swap = node.type == OpType::kQueryRelO;
        ad::Var e = pool_pairs(ctx, *node.rtype, swap ? in[1] : in[0],
                               swap ? in[0] : in[1], tau);
        const auto& cands = vocab.relations(*node.rtype);
        result = own(ctx.concepts.answer_scores(e, cands, node.type));
        for (ConceptId c : cands) res.labels.push_back(vocab.concept_name(c));
        output = result;
        break;
      }
      case OpType::kVerify: {
        ad::Var e = ad::matmul(attention(in[0], tau), ctx.embeddings(*node.attr));
        result = own(ctx.concepts.similarity(e, *node.concept_id, node.type));
        output = result;
        break;
      }
      case OpType::kChoose: {
        ad::Var emb = ctx.embeddings(*node.attr);
        std::vector<ad::Var> scores;
        for (int k = 0; k < 2; ++k) {
          ad::Var e = ad::matmul(attention(in[static_cast<std::size_t>(k)], tau), emb);
          scores.push_back(ctx.concepts.similarity(e, *node.concept_id, node.type));
          res.labels.push_back(first_select_label(p, node.deps[static_cast<std::size_t>(k)], vocab));
        }
        result = own(ad::concat_cols(scores));
        output = result;
        break;
      }
      case OpType::kVerifyRelS:
      case OpType::kVerifyRelO: {
        const bool swap = node.type == OpType::kVerifyRelO;
        ad::Var e = pool_pairs(ctx, *node.rtype, swap ? in[1] : in[0],
                               swap ? in[0] : in[1], tau);
        result = own(ctx.concepts.similarity(e, *node.concept_id, node.type));
        output = result;
        break;
      }
      case OpType::kSame: {
        ad::Var att = attention(in[0], tau);
        ad::Var emb = ctx.embeddings(*node.attr);
        ad::Var center = ad::l2_normalize_rows(ad::matmul(att, emb));
        ad::Var cosines = ad::matmul(center, ad::transpose(ad::l2_normalize_rows(emb)));
        ad::Var a = ad::sub(ad::sum(ad::mul(att, cosines)),
                            tape.param(store, model.same_offset()));
        result = own(a);
        output = result;
        break;
      }
      case OpType::kQueryAe: {
        ad::Var emb = ctx.embeddings(*node.attr);
        ad::Var e1 = ad::l2_normalize_rows(ad::matmul(attention(in[0], tau), emb));
        ad::Var e2 = ad::l2_normalize_rows(ad::matmul(attention(in[1], tau), emb));
        result = own(ad::dot(e1, e2));
        output = result;
        break;
      }
      case OpType::kCommon: {
        ad::Var a1 = attention(in[0], tau), a2 = attention(in[1], tau);
        std::vector<ad::Var> scores;
        for (AttrId a : model.common_families()) {
          ad::Var emb = ctx.embeddings(a);
          ad::Var e1 = ad::l2_normalize_rows(ad::matmul(a1, emb));
          ad::Var e2 = ad::l2_normalize_rows(ad::matmul(a2, emb));
          scores.push_back(ad::dot(e1, e2));
          res.labels.push_back(vocab.attribute_name(a));
        }
        if (scores.empty()) throw EmptyCandidates("no attribute families for common");
        result = own(ad::concat_cols(scores));
        output = result;
        break;
      }
      case OpType::kExist:
        result = own(ad::max(in[0]));
        output = result;
        break;
      case OpType::kIntersect:
        result = own(ad::min2(in[0], in[1]));
        output = result;
        break;
      case OpType::kUnion:
        result = own(ad::max2(in[0], in[1]));
        output = result;
        break;
    }
    out[static_cast<std::size_t>(i)] = output;

    if (opts.trace) {
      NodeTrace& t = trace[static_cast<std::size_t>(i)];
      t.index = i;
      t.label = node_label(node, vocab);
      if (weight[static_cast<std::size_t>(i)].valid()) {
        t.weight = weight[static_cast<std::size_t>(i)].item();
      }
      if (cal) t.logit = cal->logits.value()[i];
      for (const ad::Var& x : in) t.inputs.push_back(values_of(x));
      t.result = values_of(result);
      t.output = values_of(output);
    }
  }

  res.scores = out[0];
  res.kind = signature(p.root().type).output;
  res.score_values = values_of(res.scores);
  const std::vector<double>& s = res.score_values;
  switch (res.kind) {
    case OutputKind::kBinary:
      res.labels = {"yes"};
      res.margin = res.scores;
      if (cfg.binary_bias) {
        const ad::Var b = tape.param(model.params(), model.binary_bias());
        res.margin = ad::add(res.scores, ad::pick(b, magnitude_row(p.root().type)));
      }
      res.margin_value = res.margin.item();
      res.answer = res.margin_value > cfg.binary_threshold ? "yes" : "no";
      break;
    case OutputKind::kOpen:
    case OutputKind::kChoice:
    case OutputKind::kCommon:
      res.answer = res.labels.at(static_cast<std::size_t>(argmax(s)));
      break;
    case OutputKind::kDistribution:
      throw InvalidProgram("root is not an output module");
  }
  res.trace = std::move(trace);
  return res;
}

ExecResult execute_eval(const Model& model, const Program& p, const Scene& scene,
                        const ExecOptions& opts) {
  ad::Tape tape(false);
  ExecResult r = execute(model, p, scene, tape, opts);
  r.scores = ad::Var{};  // the tape dies here
  r.margin = ad::Var{};
  return r;
}

nlohmann::json trace_to_json(const ExecResult& r) {
  nlohmann::json steps = nlohmann::json::array();
  for (const NodeTrace& t : r.trace) {
    nlohmann::json j = {{"index", t.index},
                        {"op", t.label},
                        {"inputs", t.inputs},
                        {"result", t.result},
                        {"output", t.output}};
    j["weight"] = t.weight ? nlohmann::json(*t.weight) : nlohmann::json();
    j["logit"] = t.logit ? nlohmann::json(*t.logit) : nlohmann::json();
    steps.push_back(std::move(j));
  }
  nlohmann::json out = {{"answer", r.answer}, {"labels", r.labels}, {"steps", steps}};
  out["scores"] = r.score_values;
  if (r.kind == OutputKind::kBinary) out["margin"] = r.margin_value;
  return out;
}

int answer_target(const ExecResult& r, const std::string& answer) {
  if (r.kind == OutputKind::kBinary) {
    if (answer == "yes") return 1;
    if (answer == "no") return 0;
    throw UnknownAnswer("binary question with answer '" + answer + "'");
  }
  for (std::size_t k = 0; k < r.labels.size(); ++k) {
    if (r.labels[k] == answer) return static_cast<int>(k);
  }
  throw UnknownAnswer("'" + answer + "' is not among the candidate answers");
}

}  // namespace calico
