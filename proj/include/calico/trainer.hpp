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

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "calico/executor.hpp"
#include "calico/synth.hpp"

namespace calico {

struct TrainConfig {
  double lr = 5e-4;
  int batch_size = 64;
  int epochs = 10;
  int warmup_steps = 200;
  int patience = 3;  // epochs without improvement before stopping; 0 disables
  std::string schedule = "linear";  // after warmup: "linear" decay to 0 or "constant"
  double clip_norm = 5.0;           // 0 disables
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  int threads = 1;  // evaluation workers

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct Example {
  std::string qid;
  int scene = 0;  // index into Dataset::scenes
  Program program;
  std::string answer;
  std::string tmpl;
  bool overspecified = false;
};

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<Example> examples;

  int size() const { return static_cast<int>(examples.size()); }
};

// Pairs questions with their scenes. Throws SchemaError for a question whose
// scene is missing.
Dataset make_dataset(std::vector<Scene> scenes, const std::vector<Question>& questions);

// Scenes shuffled with `seed` and cut by fraction; a scene's questions stay
// with it.
struct DataSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};
DataSplits split_by_scene(const Dataset& all, double train_frac, double val_frac,
                          std::uint64_t seed);

// Cross entropy over the answer scores for open, choose and common
// questions; binary cross entropy on sigmoid(margin - threshold) otherwise.
ad::Var answer_loss(const ExecResult& r, const std::string& gold, double threshold);

double learning_rate(const TrainConfig& cfg, long long step, long long total_steps);

class Adam {
 public:
  Adam(const ad::ParamStore& store, const TrainConfig& cfg);
  void step(ad::ParamStore& store, const ad::GradStore& grads, double lr);
  long long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long long t_ = 0;
  std::vector<ad::Tensor> m_, v_;
};

struct EpochMetrics {
  int epoch = 0;
  long long step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  int best_epoch = 0;  // 0: the initial parameters
  double best_val_accuracy = 0.0;
};

// Adam with warmup and clipping. When `val` is non-empty the parameters with
// the best validation accuracy are restored at the end.
TrainResult train(Model& model, const Dataset& train_set, const Dataset& val,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

struct EvalRecord {
  std::string qid;
  std::string gold;
  std::string predicted;
  std::string tmpl;
  bool correct = false;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<EvalRecord> records;
  std::map<std::string, std::pair<int, int>> by_template;  // correct, total
};

// Throws ConfigError on an empty dataset.
EvalResult evaluate(const Model& model, const Dataset& data, int threads = 1,
                    const ExecOptions& opts = {});

// Sum of the answer loss and its gradient over a batch (no update).
double batch_gradient(const Model& model, const Dataset& data, const std::vector<int>& batch,
                      ad::GradStore& grads);

// Finite-difference check of the summed answer loss over `programs` against
// every model parameter.
ad::GradCheckResult loss_grad_check(Model& model, const Scene& scene,
                                    const std::vector<Program>& programs,
                                    const std::vector<std::string>& answers,
                                    double step = 1e-6, double floor = 1e-6);

}  // namespace calico
