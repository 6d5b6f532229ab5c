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

#include "calico/perturber.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "calico/errors.hpp"

namespace calico {

namespace {

// Removes the removable nodes of `p` whose logit is below the threshold, all
// at once. Higher indices go first so lower ones stay valid.
Program remove_below(const Program& p, const std::vector<double>& logits, double threshold,
                     bool* changed) {
  std::vector<int> doomed;
  for (int i : removable_set(p)) {
    if (logits[static_cast<std::size_t>(i)] < threshold) doomed.push_back(i);
  }
  *changed = !doomed.empty();
  Program out = p;
  std::sort(doomed.rbegin(), doomed.rend());
  for (int i : doomed) out = remove_node(out, i);
  return out;
}

}  // namespace

PerturbedProgram perturb_program(const Model& model, const Program& p, double threshold,
                                 bool iterative) {
  PerturbedProgram out;
  out.program = p;
  out.removable = static_cast<int>(removable_set(p).size());
  const OpCalibrator& cal = model.calibrator();
  bool changed = true;
  while (changed) {
    const auto v = cal.predict_values(model.params(), out.program);
    out.program = remove_below(out.program, v.logits, threshold, &changed);
    if (!iterative) break;
  }
  out.removed = out.removable - static_cast<int>(removable_set(out.program).size());
  return out;
}

std::vector<PerturbedSet> perturb_set(const Model& model, const Dataset& data,
                                      const std::vector<double>& thresholds, bool iterative) {
  if (!model.config().opcal) {
    throw ConfigError("perturbation needs a model trained with operation calibration");
  }
  std::vector<PerturbedSet> out;
  for (double t : thresholds) {
    PerturbedSet s;
    s.threshold = t;
    s.data.scenes = data.scenes;
    for (const Example& ex : data.examples) {
      PerturbedProgram pp = perturb_program(model, ex.program, t, iterative);
      s.removable += pp.removable;
      s.removed += pp.removed;
      s.modified += !(pp.program == ex.program);
      Example e = ex;
      e.program = std::move(pp.program);
      s.data.examples.push_back(std::move(e));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string format_threshold(double t) {
  if (std::isinf(t)) return t < 0 ? "-inf" : "inf";
  std::ostringstream os;
  os << t;
  return os.str();
}

std::string PerturbReport::to_csv() const {
  std::ostringstream os;
  os.precision(6);
  os << "threshold,frac_removed,frac_questions_modified,accuracy,delta\n";
  for (const PerturbRow& r : rows) {
    os << format_threshold(r.threshold) << ',' << r.frac_removed << ','
       << r.frac_questions_modified << ',' << r.accuracy << ',' << r.delta << '\n';
  }
  return os.str();
}

nlohmann::json PerturbReport::to_json() const {
  nlohmann::json rs = nlohmann::json::array();
  for (const PerturbRow& r : rows) {
    nlohmann::json t = std::isinf(r.threshold) ? nlohmann::json(format_threshold(r.threshold))
                                               : nlohmann::json(r.threshold);
    rs.push_back({{"threshold", t},
                  {"frac_removed", r.frac_removed},
                  {"frac_questions_modified", r.frac_questions_modified},
                  {"accuracy", r.accuracy},
                  {"delta", r.delta}});
  }
  return {{"original_accuracy", original_accuracy}, {"rows", rs}};
}

PerturbReport curve(const Model& model, const Dataset& data,
                    const std::vector<double>& thresholds, bool iterative, int threads) {
  PerturbReport rep;
  rep.original_accuracy = evaluate(model, data, threads).accuracy;
  for (const PerturbedSet& s : perturb_set(model, data, thresholds, iterative)) {
    PerturbRow r;
    r.threshold = s.threshold;
    r.frac_removed = s.removable > 0 ? static_cast<double>(s.removed) / s.removable : 0.0;
    r.frac_questions_modified = static_cast<double>(s.modified) / data.size();
    r.accuracy = evaluate(model, s.data, threads).accuracy;
    r.delta = r.accuracy - rep.original_accuracy;
    rep.rows.push_back(r);
  }
  return rep;
}

EasyCriterion unit_weight_criterion(const Model& model) {
  auto base = std::make_shared<Model>(model);
  ad::Tensor& mags = base->params().value(base->concepts().magnitudes());
  std::fill(mags.data.begin(), mags.data.end(), 1.0);
  base->runtime_config().opcal = false;
  return [base](const Example& ex, const Scene& scene) {
    return execute_eval(*base, ex.program, scene).answer == ex.answer;
  };
}

std::pair<Dataset, Dataset> split_easy_hard(const Dataset& data, const EasyCriterion& easy) {
  std::pair<Dataset, Dataset> out;
  out.first.scenes = data.scenes;
  out.second.scenes = data.scenes;
  for (const Example& ex : data.examples) {
    const bool e = easy(ex, data.scenes[static_cast<std::size_t>(ex.scene)]);
    (e ? out.first : out.second).examples.push_back(ex);
  }
  return out;
}

}  // namespace calico
