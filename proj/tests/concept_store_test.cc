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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "calico/errors.hpp"
#include "calico/nn.hpp"

namespace calico {
namespace {

using ad::Tensor;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> row_of(const Tensor& t, int r) {
  std::vector<double> v;
  for (int c = 0; c < t.cols; ++c) v.push_back(t(r, c));
  return v;
}

// Scalar similarity written out per mode.
double similarity_oracle(const std::vector<double>& e, const std::vector<double>& c,
                         double w, CalibrationMode mode) {
  const double en = norm(e);
  switch (mode) {
    case CalibrationMode::kNormalized:
      return dot(e, c) / (en * norm(c));
    case CalibrationMode::kUnnormalized:
      return dot(e, c) / en;
    case CalibrationMode::kCalibrated:
      return w * dot(e, c) / (en * norm(c));
  }
  return 0.0;
}

struct Fixture {
  ad::ParamStore store;
  ConceptStore concepts;
  Fixture(int n, int dim, std::uint64_t seed) {
    ad::Rng rng(seed);
    concepts = ConceptStore::create(store, n, dim, rng);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    for (double& w : store.value(concepts.magnitudes()).data) w = u(rng);
  }
};

TEST(ConceptStoreTest, ModeNamesRoundTrip) {
  for (auto m : {CalibrationMode::kNormalized, CalibrationMode::kUnnormalized,
                 CalibrationMode::kCalibrated}) {
    EXPECT_EQ(mode_from_name(mode_name(m)), m);
  }
  EXPECT_FALSE(mode_from_name("average").has_value());
}

TEST(ConceptStoreTest, ObjectSideModulesShareMagnitudeRows) {
  EXPECT_EQ(magnitude_row(OpType::kQueryRelO), magnitude_row(OpType::kQueryRelS));
  EXPECT_EQ(magnitude_row(OpType::kVerifyRelO), magnitude_row(OpType::kVerifyRelS));
  EXPECT_NE(magnitude_row(OpType::kSelect), magnitude_row(OpType::kFilter));
  EXPECT_EQ(magnitude_row(OpType::kQuery), static_cast<int>(OpType::kQuery));
}

TEST(ConceptStoreTest, CreateInitializesUnitMagnitudes) {
  ad::ParamStore store;
  ad::Rng rng(1);
  const ConceptStore cs = ConceptStore::create(store, 5, 4, rng);
  const Tensor& m = store.value(cs.magnitudes());
  EXPECT_EQ(m.rows, kNumOpTypes);
  EXPECT_EQ(m.cols, 5);
  for (double x : m.data) EXPECT_EQ(x, 1.0);
  EXPECT_THROW(ConceptStore::create(store, 0, 4, rng, "other"), ConfigError);
}

TEST(ConceptStoreTest, SimilaritiesMatchLoopOracleInEveryMode) {
  Fixture f(6, 5, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 1.0);
  const Tensor& dirs = f.store.value(f.concepts.directions());
  for (auto mode : {CalibrationMode::kNormalized, CalibrationMode::kUnnormalized,
                    CalibrationMode::kCalibrated}) {
    for (int trial = 0; trial < 50; ++trial) {
      Tensor e(3, 5);
      for (double& x : e.data) x = g(rng);
      const ConceptId c = trial % 6;
      const OpType t = static_cast<OpType>(trial % kNumOpTypes);
      ad::Tape tape(false);
      ConceptView view(tape, f.store, f.concepts, mode);
      const Tensor s = view.similarities(tape.constant(e), c, t).value();
      const double w = f.concepts.magnitude(f.store, t, c);
      for (int i = 0; i < 3; ++i) {
        EXPECT_NEAR(s[i], similarity_oracle(row_of(e, i), row_of(dirs, c), w, mode), 1e-12);
      }
    }
  }
}

TEST(ConceptStoreTest, AnswerScoresMatchLoopOracle) {
  Fixture f(7, 4, 5);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  const Tensor& dirs = f.store.value(f.concepts.directions());
  const std::vector<ConceptId> cands = {1, 4, 6};
  for (auto mode : {CalibrationMode::kNormalized, CalibrationMode::kUnnormalized,
                    CalibrationMode::kCalibrated}) {
    for (OpType t : {OpType::kQuery, OpType::kQueryRelO}) {
      Tensor e(1, 4);
      for (double& x : e.data) x = g(rng);
      ad::Tape tape(false);
      ConceptView view(tape, f.store, f.concepts, mode);
      const Tensor s = view.answer_scores(tape.constant(e), cands, t).value();
      for (std::size_t k = 0; k < cands.size(); ++k) {
        const double w = f.concepts.magnitude(f.store, t, cands[k]);
        EXPECT_NEAR(s[static_cast<int>(k)],
                    similarity_oracle(row_of(e, 0), row_of(dirs, cands[k]), w, mode), 1e-12);
      }
    }
  }
}

TEST(ConceptStoreTest, CalibratedIgnoresDirectionScaleAndIsLinearInMagnitude) {
  Fixture f(3, 4, 8);
  const Tensor e = Tensor::row({0.3, -1.0, 0.5, 2.0});
  auto sim = [&] {
    ad::Tape tape(false);
    ConceptView view(tape, f.store, f.concepts, CalibrationMode::kCalibrated);
    return view.similarity(tape.constant(e), 1, OpType::kFilter).item();
  };
  const double base = sim();
  Tensor& dirs = f.store.value(f.concepts.directions());
  for (int k = 0; k < 4; ++k) dirs(1, k) *= 7.5;
  EXPECT_NEAR(sim(), base, 1e-14);
  f.store.value(f.concepts.magnitudes())(magnitude_row(OpType::kFilter), 1) *= 3.0;
  EXPECT_NEAR(sim(), 3.0 * base, 1e-14);
}

TEST(ConceptStoreTest, UnnormalizedScalesWithDirectionNorm) {
  Fixture f(3, 4, 9);
  const Tensor e = Tensor::row({0.3, -1.0, 0.5, 2.0});
  auto sim = [&](CalibrationMode mode) {
    ad::Tape tape(false);
    ConceptView view(tape, f.store, f.concepts, mode);
    return view.similarity(tape.constant(e), 2, OpType::kSelect).item();
  };
  const double u = sim(CalibrationMode::kUnnormalized);
  const double n = sim(CalibrationMode::kNormalized);
  Tensor& dirs = f.store.value(f.concepts.directions());
  for (int k = 0; k < 4; ++k) dirs(2, k) *= 2.0;
  EXPECT_NEAR(sim(CalibrationMode::kUnnormalized), 2.0 * u, 1e-14);
  EXPECT_NEAR(sim(CalibrationMode::kNormalized), n, 1e-14);
  EXPECT_LE(std::fabs(n), 1.0);
}

TEST(ConceptStoreTest, ErrorsOnZeroVectorsAndBadShapes) {
  Fixture f(3, 4, 10);
  ad::Tape tape(false);
  ConceptView view(tape, f.store, f.concepts, CalibrationMode::kNormalized);
  EXPECT_THROW(view.similarity(tape.constant(Tensor(1, 4, 0.0)), 0, OpType::kSelect),
               ZeroVector);
  EXPECT_THROW(view.similarity(tape.constant(Tensor(1, 3, 1.0)), 0, OpType::kSelect),
               ShapeError);
  EXPECT_THROW(view.similarity(tape.constant(Tensor(1, 4, 1.0)), 3, OpType::kSelect),
               UnknownSymbol);
  EXPECT_THROW(view.answer_scores(tape.constant(Tensor(1, 4, 1.0)), {}, OpType::kQuery),
               EmptyCandidates);
  Fixture z(2, 3, 11);
  for (double& x : z.store.value(z.concepts.directions()).data) x = 0.0;
  ad::Tape t2(false);
  ConceptView zv(t2, z.store, z.concepts, CalibrationMode::kCalibrated);
  EXPECT_THROW(zv.similarity(t2.constant(Tensor(1, 3, 1.0)), 0, OpType::kSelect), ZeroVector);
}

TEST(ConceptStoreTest, CosineGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ad::ParamStore store;
    ad::Rng r(static_cast<std::uint64_t>(trial));
    const ConceptStore cs = ConceptStore::create(store, 2, 5, r);
    Tensor e0(1, 5);
    for (double& x : e0.data) x = g(rng);
    const ad::ParamId e = store.add("e", e0);
    const auto mode = static_cast<CalibrationMode>(trial % 3);
    auto f = [&](ad::Tape& tape) {
      ConceptView view(tape, store, cs, mode);
      return view.similarity(tape.param(store, e), trial % 2, OpType::kVerify);
    };
    const ad::ParamId ids[] = {e, cs.directions(), cs.magnitudes()};
    worst = std::max(worst, ad::grad_check(f, store, ids, 1e-6, 1e-6).max_rel_error);
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(ConceptStoreTest, InitDirectionsFromFile) {
  const auto path =
      (std::filesystem::temp_directory_path() / "calico_concept_vectors.txt").string();
  {
    std::ofstream out(path);
    out << "red 1 0 0\nlight 0 2 0\nblue 0 0 3\n";
  }
  const EmbeddingFile file = load_embedding_file(path);
  std::remove(path.c_str());
  EXPECT_EQ(file.dim, 3);
  Vocabulary v;
  const AttrId color = v.add_attribute("color");
  v.add_concept("red", color);
  v.add_concept("light_blue", color);
  v.add_concept("green", color);
  ad::ParamStore store;
  ad::Rng rng(1);
  const ConceptStore cs = ConceptStore::create(store, v.num_concepts(), 3, rng);
  const Tensor before = store.value(cs.directions());
  EXPECT_NEAR(init_directions(store, cs, v, file), 2.0 / 3.0, 1e-15);
  const Tensor& d = store.value(cs.directions());
  EXPECT_EQ(row_of(d, 0), (std::vector<double>{1, 0, 0}));
  EXPECT_EQ(row_of(d, 1), (std::vector<double>{0, 1, 1.5}));
  EXPECT_EQ(row_of(d, 2), row_of(before, 2));
  ad::ParamStore other;
  const ConceptStore wide = ConceptStore::create(other, 3, 4, rng);
  EXPECT_THROW(init_directions(other, wide, v, file), ConfigError);
}

}  // namespace
}  // namespace calico
