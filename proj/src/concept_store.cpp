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

#include "calico/concept_store.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "calico/errors.hpp"

namespace calico {

std::string_view mode_name(CalibrationMode m) {
  switch (m) {
    case CalibrationMode::kNormalized:
      return "normalized";
    case CalibrationMode::kUnnormalized:
      return "unnormalized";
    case CalibrationMode::kCalibrated:
      return "calibrated";
  }
  return "?";
}

std::optional<CalibrationMode> mode_from_name(std::string_view name) {
  for (auto m : {CalibrationMode::kNormalized, CalibrationMode::kUnnormalized,
                 CalibrationMode::kCalibrated}) {
    if (mode_name(m) == name) return m;
  }
  return std::nullopt;
}

int magnitude_row(OpType t) {
  switch (t) {
    case OpType::kQueryRelO:
      return static_cast<int>(OpType::kQueryRelS);
    case OpType::kVerifyRelO:
      return static_cast<int>(OpType::kVerifyRelS);
    default:
      return static_cast<int>(t);
  }
}

ConceptStore ConceptStore::create(ad::ParamStore& store, int num_concepts, int dim,
                                  ad::Rng& rng, const std::string& prefix) {
  if (num_concepts <= 0 || dim <= 0) {
    throw ConfigError("concept table needs positive size and dimension");
  }
  ConceptStore cs;
  cs.num_concepts_ = num_concepts;
  cs.dim_ = dim;
  cs.directions_ = store.add(prefix + ".directions",
                             ad::gaussian(num_concepts, dim, 1.0 / std::sqrt(dim), rng));
  cs.magnitudes_ =
      store.add(prefix + ".magnitudes", ad::Tensor(kNumOpTypes, num_concepts, 1.0));
  return cs;
}

double ConceptStore::magnitude(const ad::ParamStore& store, OpType t, ConceptId c) const {
  return store.value(magnitudes_)(magnitude_row(t), c);
}

ConceptView::ConceptView(ad::Tape& tape, const ad::ParamStore& store,
                         const ConceptStore& concepts, CalibrationMode mode)
    : tape_(tape), store_(store), concepts_(concepts), mode_(mode) {}

ad::Var ConceptView::table() {
  if (!table_.valid()) {
    ad::Var raw = tape_.param(store_, concepts_.directions());
    table_ = mode_ == CalibrationMode::kUnnormalized ? raw : ad::l2_normalize_rows(raw);
  }
  return table_;
}

ad::Var ConceptView::magnitude(ConceptId c, OpType t) {
  if (!magnitudes_.valid()) magnitudes_ = tape_.param(store_, concepts_.magnitudes());
  return ad::pick(magnitudes_, magnitude_row(t) * concepts_.num_concepts() + c);
}

ad::Var ConceptView::embedding(ConceptId c, OpType t) {
  if (c < 0 || c >= concepts_.num_concepts()) {
    throw UnknownSymbol("concept id " + std::to_string(c) + " out of range");
  }
  ad::Var row = ad::slice_rows(table(), c, 1);
  if (mode_ == CalibrationMode::kCalibrated) row = ad::mul(row, magnitude(c, t));
  return row;
}

ad::Var ConceptView::similarities(ad::Var e, ConceptId c, OpType t) {
  if (e.cols() != concepts_.dim()) {
    throw ShapeError("embedding width " + std::to_string(e.cols()) +
                     " does not match concept dimension " +
                     std::to_string(concepts_.dim()));
  }
  return ad::matmul(embedding(c, t), ad::transpose(ad::l2_normalize_rows(e)));
}

ad::Var ConceptView::similarity(ad::Var e, ConceptId c, OpType t) {
  if (e.rows() != 1) throw ShapeError("similarity expects a single embedding");
  return similarities(e, c, t);
}

ad::Var ConceptView::answer_scores(ad::Var e, std::span<const ConceptId> candidates,
                                   OpType t) {
  if (candidates.empty()) throw EmptyCandidates("no candidate concepts");
  if (e.rows() != 1 || e.cols() != concepts_.dim()) {
    throw ShapeError("answer_scores expects a 1x" + std::to_string(concepts_.dim()) +
                     " embedding, got " + e.value().shape_string());
  }
  for (ConceptId c : candidates) {
    if (c < 0 || c >= concepts_.num_concepts()) {
      throw UnknownSymbol("concept id " + std::to_string(c) + " out of range");
    }
  }
  const std::vector<int> ids(candidates.begin(), candidates.end());
  ad::Var rows = ad::gather_rows(table(), ids);
  ad::Var scores = ad::matmul(ad::l2_normalize_rows(e), ad::transpose(rows));
  if (mode_ == CalibrationMode::kCalibrated) {
    if (!magnitudes_.valid()) magnitudes_ = tape_.param(store_, concepts_.magnitudes());
    ad::Var row = ad::slice_rows(magnitudes_, magnitude_row(t), 1);
    scores = ad::mul(scores, ad::transpose(ad::gather_rows(ad::transpose(row), ids)));
  }
  return scores;
}

EmbeddingFile load_embedding_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  EmbeddingFile f;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<double> v;
    double x;
    while (ss >> x) v.push_back(x);
    if (!ss.eof()) throw IoError(path + ":" + std::to_string(n) + ": bad number");
    if (f.dim == 0) f.dim = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != f.dim || f.dim == 0) {
      throw IoError(path + ":" + std::to_string(n) + ": expected " +
                    std::to_string(f.dim) + " values");
    }
    f.vectors.emplace(std::move(word), std::move(v));
  }
  return f;
}

double init_directions(ad::ParamStore& store, const ConceptStore& concepts,
                       const Vocabulary& vocab, const EmbeddingFile& file) {
  if (file.dim != concepts.dim()) {
    throw ConfigError("embedding file has dimension " + std::to_string(file.dim) +
                      ", concept table has " + std::to_string(concepts.dim()));
  }
  ad::Tensor& table = store.value(concepts.directions());
  int covered = 0;
  for (ConceptId c = 0; c < vocab.num_concepts(); ++c) {
    const std::string& name = vocab.concept_name(c);
    std::vector<double> row;
    if (auto it = file.vectors.find(name); it != file.vectors.end()) {
      row = it->second;
    } else if (name.find('_') != std::string::npos) {
      std::vector<double> acc(static_cast<std::size_t>(file.dim), 0.0);
      int parts = 0;
      bool all = true;
      std::istringstream ss(name);
      std::string part;
      while (std::getline(ss, part, '_')) {
        if (part.empty()) continue;
        auto pit = file.vectors.find(part);
        if (pit == file.vectors.end()) {
          all = false;
          break;
        }
        for (int k = 0; k < file.dim; ++k) acc[static_cast<std::size_t>(k)] += pit->second[static_cast<std::size_t>(k)];
        ++parts;
      }
      if (all && parts > 0) {
        for (double& v : acc) v /= parts;
        row = std::move(acc);
      }
    }
    if (row.empty()) continue;
    double norm = 0.0;
    for (double v : row) norm += v * v;
    if (norm < 1e-24) continue;
    for (int k = 0; k < file.dim; ++k) table(c, k) = row[static_cast<std::size_t>(k)];
    ++covered;
  }
  return static_cast<double>(covered) / vocab.num_concepts();
}

}  // namespace calico
