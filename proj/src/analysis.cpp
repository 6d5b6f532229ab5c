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

#include "calico/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "calico/errors.hpp"

namespace calico {

std::vector<MagnitudeRow> magnitude_table(const Model& model,
                                          const std::vector<Example>& examples) {
  const Vocabulary& v = model.vocab();
  std::map<ConceptId, int> counts;
  for (const Example& ex : examples) {
    const OpType root = ex.program.node(0).type;
    if (root != OpType::kQuery && root != OpType::kQueryRelS && root != OpType::kQueryRelO) {
      continue;
    }
    if (auto c = v.find_concept(ex.answer)) ++counts[*c];
  }
  const ad::Tensor& dirs = model.params().value(model.concepts().directions());
  const ad::Tensor& mags = model.params().value(model.concepts().magnitudes());
  std::vector<MagnitudeRow> out;
  for (const auto& [c, n] : counts) {
    MagnitudeRow r;
    r.concept_name = v.concept_name(c);
    r.count = n;
    r.log_count = std::log(static_cast<double>(n));
    switch (model.config().mode) {
      case CalibrationMode::kCalibrated: {
        const OpType t = v.concept_info(c).is_relation ? OpType::kQueryRelS : OpType::kQuery;
        r.magnitude = mags(magnitude_row(t), c);
        break;
      }
      case CalibrationMode::kUnnormalized: {
        double sq = 0.0;
        for (int d = 0; d < dirs.cols; ++d) sq += dirs(c, d) * dirs(c, d);
        r.magnitude = std::sqrt(sq);
        break;
      }
      case CalibrationMode::kNormalized:
        r.magnitude = 1.0;
        break;
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<int> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return x[static_cast<std::size_t>(a)] < x[static_cast<std::size_t>(b)];
  });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[static_cast<std::size_t>(order[j + 1])] ==
                                       x[static_cast<std::size_t>(order[i])]) {
      ++j;
    }
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[static_cast<std::size_t>(order[k])] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  const auto rx = ranks(x), ry = ranks(y);
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

nlohmann::json operation_weights(const Model& model, const Program& p) {
  const auto v = model.calibrator().predict_values(model.params(), p);
  const auto rem = removable_set(p);
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < p.size(); ++i) {
    nodes.push_back({{"index", i},
                     {"op", node_label(p.node(i), model.vocab())},
                     {"weight", v.weights[static_cast<std::size_t>(i)]},
                     {"logit", v.logits[static_cast<std::size_t>(i)]},
                     {"removable", rem.count(i) > 0}});
  }
  return nodes;
}

}  // namespace calico
