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

#include "calico/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

#include "calico/errors.hpp"

namespace calico {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (patience < 0) throw ConfigError("patience must be >= 0");
  if (schedule != "linear" && schedule != "constant") {
    throw ConfigError("schedule must be 'linear' or 'constant'");
  }
  if (clip_norm < 0) throw ConfigError("clip_norm must be >= 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) {
    throw ConfigError("Adam betas must be in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigError("eps must be positive");
  if (threads < 1) throw ConfigError("threads must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},         {"batch_size", batch_size},     {"epochs", epochs},
          {"warmup_steps", warmup_steps}, {"patience", patience}, {"schedule", schedule},
          {"clip_norm", clip_norm}, {"beta1", beta1},         {"beta2", beta2},
          {"eps", eps},       {"seed", seed},                 {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  c.patience = j.value("patience", c.patience);
  c.schedule = j.value("schedule", c.schedule);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

Dataset make_dataset(std::vector<Scene> scenes, const std::vector<Question>& questions) {
  Dataset d;
  d.scenes = std::move(scenes);
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < static_cast<int>(d.scenes.size()); ++i) {
    index.emplace(d.scenes[static_cast<std::size_t>(i)].id, i);
  }
  for (const Question& q : questions) {
    auto it = index.find(q.scene_id);
    if (it == index.end()) {
      throw SchemaError("question " + q.qid + " refers to unknown scene '" + q.scene_id + "'");
    }
    d.examples.push_back({q.qid, it->second, q.program, q.answer, q.tmpl, q.overspecified});
  }
  return d;
}

DataSplits split_by_scene(const Dataset& all, double train_frac, double val_frac,
                          std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) {
    throw ConfigError("split fractions must be nonnegative and sum to at most 1");
  }
  const int n = static_cast<int>(all.scenes.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = static_cast<int>(std::lround(train_frac * n));
  const int n_val = std::min(n - n_train, static_cast<int>(std::lround(val_frac * n)));
  std::vector<int> part(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    part[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] =
        k < n_train ? 0 : (k < n_train + n_val ? 1 : 2);
  }
  DataSplits out;
  Dataset* dst[3] = {&out.train, &out.val, &out.test};
  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    Dataset& d = *dst[part[static_cast<std::size_t>(i)]];
    remap[static_cast<std::size_t>(i)] = static_cast<int>(d.scenes.size());
    d.scenes.push_back(all.scenes[static_cast<std::size_t>(i)]);
  }
  for (const Example& e : all.examples) {
    Example copy = e;
    copy.scene = remap[static_cast<std::size_t>(e.scene)];
    dst[part[static_cast<std::size_t>(e.scene)]]->examples.push_back(std::move(copy));
  }
  return out;
}

ad::Var answer_loss(const ExecResult& r, const std::string& gold, double threshold) {
  const int target = answer_target(r, gold);
  if (r.kind == OutputKind::kBinary) {
    const ad::Var z = ad::add_scalar(r.margin.valid() ? r.margin : r.scores, -threshold);
    // -log sigmoid(z) for "yes", -log(1 - sigmoid(z)) for "no"
    return target == 1 ? ad::softplus(ad::neg(z)) : ad::softplus(z);
  }
  return ad::sub(ad::logsumexp(r.scores), ad::pick(r.scores, target));
}

double learning_rate(const TrainConfig& cfg, long long step, long long total_steps) {
  if (cfg.warmup_steps > 0 && step < cfg.warmup_steps) {
    return cfg.lr * static_cast<double>(step + 1) / cfg.warmup_steps;
  }
  if (cfg.schedule == "constant") return cfg.lr;
  const long long decay = total_steps - cfg.warmup_steps;
  if (decay <= 0) return cfg.lr;
  const double left = static_cast<double>(total_steps - step) / static_cast<double>(decay);
  return cfg.lr * std::clamp(left, 0.0, 1.0);
}

Adam::Adam(const ad::ParamStore& store, const TrainConfig& cfg)
    : beta1_(cfg.beta1), beta2_(cfg.beta2), eps_(cfg.eps) {
  for (int i = 0; i < store.size(); ++i) {
    const ad::Tensor& v = store.value(i);
    m_.emplace_back(v.rows, v.cols, 0.0);
    v_.emplace_back(v.rows, v.cols, 0.0);
  }
}

void Adam::step(ad::ParamStore& store, const ad::GradStore& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int i = 0; i < store.size(); ++i) {
    ad::Tensor& p = store.value(i);
    const ad::Tensor& g = grads[i];
    ad::Tensor& m = m_[static_cast<std::size_t>(i)];
    ad::Tensor& v = v_[static_cast<std::size_t>(i)];
    for (int k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

nlohmann::json EpochMetrics::to_json() const {
  return {{"epoch", epoch},
          {"step", step},
          {"lr", lr},
          {"train_loss", train_loss},
          {"train_accuracy", train_accuracy},
          {"val_accuracy", val_accuracy},
          {"grad_norm", grad_norm}};
}

namespace {

struct BatchStats {
  double loss = 0.0;
  int correct = 0;
};

BatchStats accumulate_batch(const Model& model, const Dataset& data,
                            const std::vector<int>& batch, ad::GradStore& grads) {
  BatchStats s;
  const double threshold = model.config().binary_threshold;
  for (int idx : batch) {
    const Example& ex = data.examples[static_cast<std::size_t>(idx)];
    ad::Tape tape;
    const ExecResult r =
        execute(model, ex.program, data.scenes[static_cast<std::size_t>(ex.scene)], tape);
    const ad::Var loss = answer_loss(r, ex.answer, threshold);
    tape.backward(loss);
    tape.accumulate(grads);
    s.loss += loss.item();
    s.correct += r.answer == ex.answer;
  }
  return s;
}

}  // namespace

double batch_gradient(const Model& model, const Dataset& data, const std::vector<int>& batch,
                      ad::GradStore& grads) {
  return accumulate_batch(model, data, batch, grads).loss;
}

TrainResult train(Model& model, const Dataset& train_set, const Dataset& val,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  TrainResult result;
  if (cfg.epochs == 0) return result;
  if (train_set.examples.empty()) throw ConfigError("training set is empty");

  const bool has_val = !val.examples.empty();
  if (has_val) result.best_val_accuracy = evaluate(model, val, cfg.threads).accuracy;
  std::vector<ad::Tensor> best;
  auto snapshot = [&] {
    best.clear();
    for (int i = 0; i < model.params().size(); ++i) best.push_back(model.params().value(i));
  };
  snapshot();

  const int n = train_set.size();
  const long long per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const long long total = per_epoch * cfg.epochs;
  std::mt19937_64 rng(cfg.seed);
  Adam adam(model.params(), cfg);
  ad::GradStore grads(model.params());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  int stale = 0;
  long long step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, norm_sum = 0.0, lr = 0.0;
    int correct = 0;
    for (long long b = 0; b < per_epoch; ++b) {
      const auto first = order.begin() + b * cfg.batch_size;
      const auto last = order.begin() + std::min<long long>(n, (b + 1) * cfg.batch_size);
      const std::vector<int> batch(first, last);
      grads.zero();
      const BatchStats s = accumulate_batch(model, train_set, batch, grads);
      loss_sum += s.loss;
      correct += s.correct;
      grads.scale(1.0 / static_cast<double>(batch.size()));
      const double norm = grads.global_norm();
      norm_sum += norm;
      if (cfg.clip_norm > 0 && norm > cfg.clip_norm) grads.scale(cfg.clip_norm / norm);
      lr = learning_rate(cfg, step, total);
      adam.step(model.params(), grads, lr);
      ++step;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.step = step;
    m.lr = lr;
    m.train_loss = loss_sum / n;
    m.train_accuracy = static_cast<double>(correct) / n;
    m.grad_norm = norm_sum / static_cast<double>(per_epoch);
    if (has_val) m.val_accuracy = evaluate(model, val, cfg.threads).accuracy;
    result.history.push_back(m);
    if (on_epoch) on_epoch(m);

    if (!has_val || m.val_accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = m.val_accuracy;
      result.best_epoch = epoch;
      snapshot();
      stale = 0;
    } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
      break;
    }
  }
  for (int i = 0; i < model.params().size(); ++i) {
    model.params().value(i) = best[static_cast<std::size_t>(i)];
  }
  return result;
}

EvalResult evaluate(const Model& model, const Dataset& data, int threads,
                    const ExecOptions& opts) {
  if (data.examples.empty()) throw ConfigError("cannot evaluate an empty dataset");
  if (threads < 1) throw ConfigError("threads must be positive");
  EvalResult out;
  out.records.resize(data.examples.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Example& ex = data.examples[i];
      const ExecResult r = execute_eval(model, ex.program,
                                        data.scenes[static_cast<std::size_t>(ex.scene)], opts);
      out.records[i] = {ex.qid, ex.answer, r.answer, ex.tmpl, r.answer == ex.answer};
    }
  };
  const std::size_t n = data.examples.size();
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  if (workers <= 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back(work, n * w / workers, n * (w + 1) / workers);
    }
    for (std::thread& t : pool) t.join();
  }
  int correct = 0;
  for (const EvalRecord& r : out.records) {
    correct += r.correct;
    auto& [c, t] = out.by_template[r.tmpl];
    c += r.correct;
    ++t;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return out;
}

ad::GradCheckResult loss_grad_check(Model& model, const Scene& scene,
                                    const std::vector<Program>& programs,
                                    const std::vector<std::string>& answers, double step,
                                    double floor) {
  if (programs.size() != answers.size()) throw ShapeError("one answer per program");
  const double threshold = model.config().binary_threshold;
  auto f = [&](ad::Tape& tape) {
    ad::Var total = tape.scalar(0.0);
    for (std::size_t i = 0; i < programs.size(); ++i) {
      const ExecResult r = execute(model, programs[i], scene, tape);
      total = ad::add(total, answer_loss(r, answers[i], threshold));
    }
    return total;
  };
  std::vector<ad::ParamId> ids(static_cast<std::size_t>(model.params().size()));
  std::iota(ids.begin(), ids.end(), 0);
  return ad::grad_check(f, model.params(), ids, step, floor);
}

}  // namespace calico
