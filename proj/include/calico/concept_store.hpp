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
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "calico/nn.hpp"
#include "calico/program.hpp"
#include "calico/tape.hpp"
#include "calico/vocab.hpp"

namespace calico {

enum class CalibrationMode { kNormalized, kUnnormalized, kCalibrated };

std::string_view mode_name(CalibrationMode m);
std::optional<CalibrationMode> mode_from_name(std::string_view name);

// Magnitude row used by a module. The object-side relation modules are
// defined as their subject-side twins with swapped inputs and share the row.
int magnitude_row(OpType t);

// Concept directions (one row per concept, relations included) and one
// magnitude scalar per (module type, concept).
class ConceptStore {
 public:
  ConceptStore() = default;
  // Directions ~ N(0, 1/dim); magnitudes 1.0.
  static ConceptStore create(ad::ParamStore& store, int num_concepts, int dim,
                             ad::Rng& rng, const std::string& prefix = "concept");

  int num_concepts() const { return num_concepts_; }
  int dim() const { return dim_; }
  ad::ParamId directions() const { return directions_; }
  ad::ParamId magnitudes() const { return magnitudes_; }
  double magnitude(const ad::ParamStore& store, OpType t, ConceptId c) const;

 private:
  int num_concepts_ = 0;
  int dim_ = 0;
  ad::ParamId directions_ = -1;
  ad::ParamId magnitudes_ = -1;
};

// Binds a ConceptStore to one tape and mode. Object embeddings are always
// unit-normalized; concept embeddings are the unit direction (normalized),
// the raw row (unnormalized) or the unit direction times the module-type
// magnitude (calibrated).
class ConceptView {
 public:
  ConceptView(ad::Tape& tape, const ad::ParamStore& store,
              const ConceptStore& concepts, CalibrationMode mode);

  CalibrationMode mode() const { return mode_; }
  // 1 x d effective concept embedding.
  ad::Var embedding(ConceptId c, OpType t);
  // Similarity of each row of `e` (n x d) to the concept: 1 x n.
  ad::Var similarities(ad::Var e, ConceptId c, OpType t);
  // 1 x 1 similarity of a single 1 x d embedding.
  ad::Var similarity(ad::Var e, ConceptId c, OpType t);
  // 1 x k scores of a 1 x d embedding against candidate concepts.
  ad::Var answer_scores(ad::Var e, std::span<const ConceptId> candidates, OpType t);

 private:
  ad::Var table();
  ad::Var magnitude(ConceptId c, OpType t);

  ad::Tape& tape_;
  const ad::ParamStore& store_;
  const ConceptStore& concepts_;
  CalibrationMode mode_;
  ad::Var table_;
  ad::Var magnitudes_;
};

// Whitespace-separated `word f1 ... fd` lines.
struct EmbeddingFile {
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

EmbeddingFile load_embedding_file(const std::string& path);

// Overwrites direction rows of concepts found in `file`. A name with
// underscores that is missing as a whole uses the mean of its parts when all
// parts are present. Rows not covered keep their current (random) value.
// Returns the covered fraction of concepts.
double init_directions(ad::ParamStore& store, const ConceptStore& concepts,
                       const Vocabulary& vocab, const EmbeddingFile& file);

}  // namespace calico
