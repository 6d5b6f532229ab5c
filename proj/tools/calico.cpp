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

// calico: command line front end for corpus generation, training, evaluation,
// program execution, perturbation and analysis.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "calico/analysis.hpp"
#include "calico/errors.hpp"
#include "calico/executor.hpp"
#include "calico/perturber.hpp"
#include "calico/program.hpp"
#include "calico/scene.hpp"
#include "calico/synth.hpp"
#include "calico/trainer.hpp"

#ifndef CALICO_SOURCE_DIR
#define CALICO_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace calico {
namespace {

std::string now_utc() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string git_describe() {
  const std::string cmd =
      std::string("git -C \"") + CALICO_SOURCE_DIR + "\" describe --always --dirty 2>/dev/null";
  std::string out;
  if (FILE* f = popen(cmd.c_str(), "r")) {
    char buf[256];
    while (fgets(buf, sizeof buf, f)) out += buf;
    pclose(f);
  }
  while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
  return out.empty() ? "unknown" : out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

double parse_threshold(const std::string& s) {
  const double inf = std::numeric_limits<double>::infinity();
  if (s == "inf" || s == "+inf") return inf;
  if (s == "-inf") return -inf;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw ConfigError("bad threshold '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("bad threshold '" + s + "'");
  }
}

// ---- options ---------------------------------------------------------------------------

struct Common {
  std::uint64_t seed = 0;
  int threads = 1;
};

struct ModelFlags {
  std::string mode = "calibrated";
  std::string opcal = "on";
  int dim = 32;
  int mapping_hidden = 64;
  int pair_hidden = 64;
  double tau = 1.0;
  double threshold = 0.0;
  std::string binary_bias = "on";

  ModelConfig to_config(std::uint64_t seed) const {
    ModelConfig mc;
    mc.mode = *mode_from_name(mode);
    mc.opcal = opcal == "on";
    mc.dim = dim;
    mc.mapping_hidden = mapping_hidden;
    mc.pair_hidden = pair_hidden;
    mc.tau = tau;
    mc.binary_threshold = threshold;
    mc.binary_bias = binary_bias == "on";
    mc.seed = seed;
    return mc;
  }
};

const std::vector<std::string> kModes = {"normalized", "unnormalized", "calibrated"};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed")->envname("CALICO_SEED")->capture_default_str();
  cmd->add_option("--threads", c.threads, "Worker threads for evaluation")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--mode", m.mode, "Concept calibration mode")
      ->check(CLI::IsMember(kModes))
      ->capture_default_str();
  cmd->add_option("--opcal", m.opcal, "Operation calibration")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  cmd->add_option("--dim", m.dim, "Embedding size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--mapping-hidden", m.mapping_hidden, "Object mapping hidden size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--pair-hidden", m.pair_hidden, "Pair mapping hidden size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--tau", m.tau, "Attention temperature")->capture_default_str();
  cmd->add_option("--binary-threshold", m.threshold, "Decode threshold for yes/no")
      ->capture_default_str();
  cmd->add_option("--binary-bias", m.binary_bias, "Learned yes/no offset")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
}

// Resolved option values of a subcommand, for the manifest.
json option_snapshot(const CLI::App* cmd) {
  json j = json::object();
  for (const CLI::Option* opt : cmd->get_options()) {
    std::string key = opt->get_single_name();
    if (key.empty() || key == "help") continue;
    const auto res = opt->results();
    if (opt->get_items_expected_max() == 0) {
      j[key] = opt->count() > 0;
    } else if (res.empty()) {
      j[key] = opt->get_default_str();
    } else if (res.size() == 1) {
      j[key] = res.front();
    } else {
      j[key] = res;
    }
  }
  return j;
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  json config;
  std::uint64_t seed = 0;
  json inputs = json::object();
  json outputs = json::object();
  std::string started = now_utc();

  void write(const fs::path& path) const {
    json j = {{"command", command},   {"argv", argv},       {"config", config},
              {"seed", seed},         {"inputs", inputs},   {"outputs", outputs},
              {"git_describe", git_describe()},
              {"started", started},   {"finished", now_utc()}};
    write_json(path, j);
  }
};

// ---- data directory --------------------------------------------------------------------

struct DataDir {
  Vocabulary vocab;
  std::vector<GoldScene> gold;
  Dataset all;
  DataSplits splits;
};

DataDir load_data_dir(const fs::path& dir, bool gold_features) {
  DataDir d;
  d.vocab = Vocabulary::load((dir / "vocab.json").string());
  const json corpus = read_json(dir / "corpus.json");
  std::vector<Scene> scenes;
  if (gold_features) {
    d.gold = load_gold_scenes((dir / "gold_scenes.jsonl").string());
    for (const GoldScene& g : d.gold) scenes.push_back(gold_to_features(g, d.vocab));
  } else {
    scenes = load_scenes((dir / "scenes.jsonl").string(), SceneFormat::kScores);
  }
  const auto questions = load_questions((dir / "questions.jsonl").string(), d.vocab);
  d.all = make_dataset(std::move(scenes), questions);
  const json& split = corpus.at("split");
  d.splits = split_by_scene(d.all, split.at("train").get<double>(), split.at("val").get<double>(),
                            split.at("seed").get<std::uint64_t>());
  return d;
}

const Dataset& pick_split(const DataDir& d, const std::string& name) {
  if (name == "train") return d.splits.train;
  if (name == "val") return d.splits.val;
  if (name == "test") return d.splits.test;
  return d.all;
}

void check_vocab(const Model& m, const DataDir& d) {
  if (!(m.vocab() == d.vocab)) {
    throw SchemaError("checkpoint vocabulary differs from the data directory's");
  }
}

const std::vector<std::string> kSplits = {"train", "val", "test", "all"};

// ---- commands --------------------------------------------------------------------------

struct GenData {
  Common common;
  std::string out_dir;
  int questions = 20000;
  int per_scene = 4;
  int classes = 16;
  double zipf = 1.0;
  double overspec = 0.5;
  int min_objects = 3;
  int max_objects = 7;
  double signal = 3.0;
  std::optional<double> attr_signal;
  double noise = 1.0;
  double train_frac = 0.8;
  double val_frac = 0.1;
  std::vector<std::string> templates;

  void run(Manifest& man) const {
    CorpusConfig cc;
    cc.num_classes = classes;
    cc.zipf = zipf;
    cc.overspec = overspec;
    cc.questions_per_scene = per_scene;
    cc.num_scenes = (questions + per_scene - 1) / per_scene;
    cc.min_objects = min_objects;
    cc.max_objects = max_objects;
    cc.seed = common.seed;
    if (!templates.empty()) {
      for (const std::string& t : template_names()) cc.template_weights[t] = 0.0;
      for (const std::string& t : templates) {
        if (!cc.template_weights.count(t)) throw ConfigError("unknown template " + t);
        cc.template_weights[t] = 1.0;
      }
    }
    Corpus c = generate(cc);
    if (static_cast<int>(c.questions.size()) > questions) c.questions.resize(questions);

    std::mt19937_64 rng(common.seed ^ 0x70e7ce17ULL);
    std::vector<Scene> perceived;
    const double asig = attr_signal.value_or(signal);
    for (const GoldScene& g : c.scenes) {
      perceived.push_back(perceive(g, c.vocab, signal, asig, noise, rng));
    }

    const fs::path dir(out_dir);
    ensure_dir(dir);
    c.vocab.save((dir / "vocab.json").string());
    write_gold_scenes((dir / "gold_scenes.jsonl").string(), c.scenes);
    write_scenes((dir / "scenes.jsonl").string(), perceived);
    write_questions((dir / "questions.jsonl").string(), c.questions, c.vocab);
    json corpus = {{"generator", cc.to_json()},
                   {"perception",
                    {{"signal", signal}, {"attr_signal", asig}, {"noise", noise}}},
                   {"split", {{"train", train_frac}, {"val", val_frac}, {"seed", common.seed}}},
                   {"num_scenes", c.scenes.size()},
                   {"num_questions", c.questions.size()}};
    write_json(dir / "corpus.json", corpus);
    man.outputs = {{"dir", out_dir},
                   {"files", {"vocab.json", "gold_scenes.jsonl", "scenes.jsonl",
                              "questions.jsonl", "corpus.json"}}};
    std::cout << "wrote " << c.questions.size() << " questions over " << c.scenes.size()
              << " scenes to " << out_dir << "\n";
  }
};

struct Train {
  Common common;
  ModelFlags model;
  std::string data_dir;
  std::string out_dir;
  bool gold = false;
  TrainConfig tc;

  void run(Manifest& man) {
    const DataDir d = load_data_dir(data_dir, gold);
    Model m(d.vocab, model.to_config(common.seed));
    tc.seed = common.seed;
    tc.threads = common.threads;
    const fs::path dir(out_dir);
    ensure_dir(dir);
    std::ofstream metrics(dir / "metrics.jsonl", std::ios::binary);
    if (!metrics) throw IoError("cannot write metrics.jsonl");
    const TrainResult r = train(m, d.splits.train, d.splits.val, tc, [&](const EpochMetrics& e) {
      metrics << e.to_json().dump() << "\n";
      metrics.flush();
      std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " train "
                << e.train_accuracy << " val " << e.val_accuracy << "\n";
    });
    m.save((dir / "model.json").string(),
           {{"train", tc.to_json()}, {"data", data_dir}, {"gold", gold}});
    json summary = {{"best_epoch", r.best_epoch},
                    {"best_val_accuracy", r.best_val_accuracy},
                    {"epochs_run", r.history.size()},
                    {"train_size", d.splits.train.size()},
                    {"val_size", d.splits.val.size()}};
    if (d.splits.test.size() > 0) {
      summary["test_accuracy"] = evaluate(m, d.splits.test, common.threads).accuracy;
    }
    write_json(dir / "summary.json", summary);
    man.inputs = {{"data", data_dir}};
    man.outputs = {{"dir", out_dir},
                   {"files", {"model.json", "metrics.jsonl", "summary.json"}}};
    std::cout << summary.dump() << "\n";
  }
};

struct Eval {
  Common common;
  std::string checkpoint;
  std::string data_dir;
  std::string out_dir;
  std::string split = "test";
  bool gold = false;

  void run(Manifest& man) const {
    const DataDir d = load_data_dir(data_dir, gold);
    const Model m = Model::load(checkpoint);
    check_vocab(m, d);
    const Dataset& data = pick_split(d, split);
    const EvalResult r = evaluate(m, data, common.threads);
    json by_template = json::object();
    for (const auto& [t, ct] : r.by_template) {
      by_template[t] = {{"correct", ct.first}, {"total", ct.second},
                        {"accuracy", static_cast<double>(ct.first) / ct.second}};
    }
    json metrics = {{"split", split},
                    {"questions", data.size()},
                    {"accuracy", r.accuracy},
                    {"by_template", by_template}};
    const fs::path dir(out_dir);
    ensure_dir(dir);
    write_json(dir / "metrics.json", metrics);
    std::ofstream pred(dir / "predictions.jsonl", std::ios::binary);
    for (const EvalRecord& e : r.records) {
      pred << json({{"qid", e.qid}, {"template", e.tmpl}, {"gold", e.gold},
                    {"predicted", e.predicted}, {"correct", e.correct}})
                  .dump()
           << "\n";
    }
    man.inputs = {{"checkpoint", checkpoint}, {"data", data_dir}};
    man.outputs = {{"dir", out_dir}, {"files", {"metrics.json", "predictions.jsonl"}}};
    std::cout << "accuracy " << r.accuracy << " (" << data.size() << " questions)\n";
  }
};

struct Exec {
  Common common;
  std::string program;
  std::string scene_path;
  std::string scene_id;
  std::string checkpoint;
  std::string vocab_path;
  std::string out;
  bool trace = false;

  void run(Manifest& man) const {
    std::ifstream in(scene_path);
    if (!in) throw IoError("cannot read " + scene_path);
    std::vector<json> records;
    for (std::string line; std::getline(in, line);) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        records.push_back(json::parse(line));
      } catch (const json::exception& e) {
        throw SchemaError(scene_path + ": " + e.what());
      }
    }
    if (records.empty()) throw SchemaError(scene_path + " holds no scenes");
    const json* rec = &records.front();
    if (!scene_id.empty()) {
      rec = nullptr;
      for (const json& r : records) {
        if (r.value("id", "") == scene_id) rec = &r;
      }
      if (!rec) throw UnknownSymbol("no scene with id " + scene_id);
    }
    const json& objs = rec->at("objects");
    const bool is_gold = !objs.empty() && objs.front().contains("class");

    std::optional<Model> model;
    Scene scene;
    if (!checkpoint.empty()) {
      model.emplace(Model::load(checkpoint));
      scene = is_gold ? gold_to_features(gold_scene_from_json(*rec), model->vocab())
                      : scene_from_json(*rec);
    } else {
      if (!is_gold) throw ConfigError("without --checkpoint the scene must be a gold scene");
      const GoldScene g = gold_scene_from_json(*rec);
      const Vocabulary vocab =
          vocab_path.empty() ? vocabulary_from_scenes({g}) : Vocabulary::load(vocab_path);
      ModelConfig mc = identity_model_config(vocab);
      mc.seed = common.seed;
      model.emplace(vocab, mc);
      configure_identity(*model);
      scene = gold_to_features(g, vocab);
    }
    const Program p = parse_program(program, model->vocab());
    ExecOptions opts;
    opts.trace = trace;
    const ExecResult r = execute_eval(*model, p, scene, opts);
    json j = trace ? trace_to_json(r) : json{{"answer", r.answer}, {"labels", r.labels},
                                             {"scores", r.score_values}};
    j["program"] = serialize_program(p, model->vocab());
    j["scene"] = scene.id;
    man.inputs = {{"scene", scene_path}, {"checkpoint", checkpoint}, {"vocab", vocab_path}};
    if (out.empty()) {
      std::cout << j.dump(2) << "\n";
    } else {
      write_json(out, j);
      man.outputs = {{"file", out}};
    }
  }
};

struct Perturb {
  Common common;
  std::string checkpoint;
  std::string data_dir;
  std::string out_dir;
  std::string split = "test";
  std::vector<std::string> thresholds;
  bool iterative = false;
  bool easy_hard = false;
  bool gold = false;

  void run(Manifest& man) const {
    const DataDir d = load_data_dir(data_dir, gold);
    const Model m = Model::load(checkpoint);
    check_vocab(m, d);
    std::vector<double> ts;
    for (const std::string& s : thresholds) ts.push_back(parse_threshold(s));
    if (ts.empty()) ts = default_thresholds();
    const Dataset& data = pick_split(d, split);
    const fs::path dir(out_dir);
    ensure_dir(dir);
    json files = json::array();
    auto emit = [&](const std::string& stem, const Dataset& subset) {
      const PerturbReport rep = curve(m, subset, ts, iterative, common.threads);
      write_text(dir / (stem + ".csv"), rep.to_csv());
      json j = rep.to_json();
      j["questions"] = subset.size();
      write_json(dir / (stem + ".json"), j);
      files.push_back(stem + ".csv");
      files.push_back(stem + ".json");
      std::cout << stem << " (" << subset.size() << " questions)\n" << rep.to_csv();
    };
    emit("curve", data);
    if (easy_hard) {
      const auto [easy, hard] = split_easy_hard(data, unit_weight_criterion(m));
      emit("curve_easy", easy);
      emit("curve_hard", hard);
    }
    man.inputs = {{"checkpoint", checkpoint}, {"data", data_dir}};
    man.outputs = {{"dir", out_dir}, {"files", files}};
  }
};

struct AnalyzeMagnitudes {
  Common common;
  std::string checkpoint;
  std::string data_dir;
  std::string out_dir;
  std::string split = "train";

  void run(Manifest& man) const {
    const DataDir d = load_data_dir(data_dir, false);
    const Model m = Model::load(checkpoint);
    check_vocab(m, d);
    const auto rows = magnitude_table(m, pick_split(d, split).examples);
    std::ostringstream csv;
    csv << std::setprecision(17) << "concept,count,log_count,magnitude\n";
    std::vector<double> x, y;
    for (const MagnitudeRow& r : rows) {
      csv << r.concept_name << "," << r.count << "," << r.log_count << "," << r.magnitude << "\n";
      x.push_back(r.log_count);
      y.push_back(r.magnitude);
    }
    const double rho = spearman(x, y);
    const fs::path dir(out_dir);
    ensure_dir(dir);
    write_text(dir / "magnitudes.csv", csv.str());
    write_json(dir / "stats.json", {{"concepts", rows.size()}, {"spearman", rho},
                                    {"mode", std::string(mode_name(m.config().mode))}});
    man.inputs = {{"checkpoint", checkpoint}, {"data", data_dir}};
    man.outputs = {{"dir", out_dir}, {"files", {"magnitudes.csv", "stats.json"}}};
    std::cout << "spearman " << rho << " over " << rows.size() << " concepts\n";
  }
};

struct AnalyzeWeights {
  Common common;
  std::string checkpoint;
  std::string data_dir;
  std::string out;
  std::string split = "test";
  int limit = 0;

  void run(Manifest& man) const {
    const DataDir d = load_data_dir(data_dir, false);
    const Model m = Model::load(checkpoint);
    check_vocab(m, d);
    if (!m.config().opcal) throw ConfigError("checkpoint has operation calibration off");
    const Dataset& data = pick_split(d, split);
    std::ofstream o(out, std::ios::binary);
    if (!o) throw IoError("cannot write " + out);
    int n = 0;
    for (const Example& e : data.examples) {
      if (limit > 0 && n >= limit) break;
      o << json({{"qid", e.qid}, {"program", serialize_program(e.program, m.vocab())},
                 {"nodes", operation_weights(m, e.program)}})
               .dump()
        << "\n";
      ++n;
    }
    man.inputs = {{"checkpoint", checkpoint}, {"data", data_dir}};
    man.outputs = {{"file", out}};
    std::cout << "wrote " << n << " programs to " << out << "\n";
  }
};

struct GradCheck {
  Common common;
  std::string mode = "calibrated";
  std::string opcal = "on";
  double step = 1e-6;
  double tolerance = 1e-4;
  double floor = 1e-4;
  std::string out;

  // Returns false when the check fails.
  bool run(Manifest& man) const {
    const ModuleSuite suite = module_suite();
    ModelConfig mc;
    mc.dim = 8;
    mc.mapping_hidden = 8;
    mc.pair_hidden = 8;
    mc.mode = *mode_from_name(mode);
    mc.opcal = opcal == "on";
    mc.calibrator.type_dim = 3;
    mc.calibrator.attr_dim = 3;
    mc.calibrator.concept_dim = 3;
    mc.calibrator.hidden = 4;
    mc.seed = common.seed;
    Model m(suite.vocab, mc);
    std::mt19937_64 rng(common.seed);
    const Scene scene = perceive(suite.scene, suite.vocab, 2.0, 0.5, rng);
    const ad::GradCheckResult r =
        loss_grad_check(m, scene, suite.programs, suite.answers, step, floor);
    const bool pass = r.max_rel_error < tolerance;
    json j = {{"programs", suite.programs.size()},
              {"parameters_checked", r.checked},
              {"max_rel_error", r.max_rel_error},
              {"worst_param", r.worst_param},
              {"worst_index", r.worst_index},
              {"analytic", r.analytic},
              {"numeric", r.numeric},
              {"tolerance", tolerance},
              {"floor", floor},
              {"pass", pass}};
    if (out.empty()) {
      std::cout << j.dump(2) << "\n";
    } else {
      write_json(out, j);
      man.outputs = {{"file", out}};
      std::cout << "max_rel_error " << r.max_rel_error << (pass ? " PASS\n" : " FAIL\n");
    }
    return pass;
  }
};

// ---- driver ----------------------------------------------------------------------------

int run(const std::vector<std::string>& args);

fs::path manifest_path_for(const std::string& command, const CLI::App* sub) {
  auto get = [&](const std::string& name) -> std::string {
    const CLI::Option* o = sub->get_option_no_throw(name);
    return o && o->count() > 0 ? o->as<std::string>() : std::string();
  };
  if (const std::string dir = get("--out-dir"); !dir.empty()) return fs::path(dir) / "manifest.json";
  if (const std::string file = get("--out"); !file.empty()) {
    return fs::path(file + ".manifest.json");
  }
  (void)command;
  return {};
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Trainable program executor with calibrated concepts and operations", "calico"};
  app.set_config("--config", "", "Key-value config file; command line flags take precedence");
  app.require_subcommand(1);

  GenData gen;
  CLI::App* c_gen = app.add_subcommand("gen-data", "Generate a synthetic corpus");
  add_common(c_gen, gen.common);
  c_gen->add_option("--out-dir", gen.out_dir, "Output directory")->required();
  c_gen->add_option("--questions", gen.questions, "Number of questions")->check(CLI::PositiveNumber)->capture_default_str();
  c_gen->add_option("--questions-per-scene", gen.per_scene, "Questions per scene")->check(CLI::PositiveNumber)->capture_default_str();
  c_gen->add_option("--classes", gen.classes, "Object classes")->check(CLI::PositiveNumber)->capture_default_str();
  c_gen->add_option("--zipf", gen.zipf, "Zipf exponent of concept frequencies (0 = uniform)")->capture_default_str();
  c_gen->add_option("--overspec", gen.overspec, "Probability of redundant operations")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_gen->add_option("--min-objects", gen.min_objects, "Fewest objects per scene")->capture_default_str();
  c_gen->add_option("--max-objects", gen.max_objects, "Most objects per scene")->capture_default_str();
  c_gen->add_option("--signal", gen.signal, "Perception signal strength")->capture_default_str();
  c_gen->add_option("--attr-signal", gen.attr_signal,
                    "Signal strength of non-class families (default: --signal)");
  c_gen->add_option("--noise", gen.noise, "Perception noise")->capture_default_str();
  c_gen->add_option("--train-frac", gen.train_frac, "Fraction of scenes for training")->capture_default_str();
  c_gen->add_option("--val-frac", gen.val_frac, "Fraction of scenes for validation")->capture_default_str();
  c_gen->add_option("--templates", gen.templates, "Restrict to these question templates")->delimiter(',');

  Train tr;
  CLI::App* c_train = app.add_subcommand("train", "Train a model");
  add_common(c_train, tr.common);
  add_model_flags(c_train, tr.model);
  c_train->add_option("--data", tr.data_dir, "Corpus directory")->required();
  c_train->add_option("--out-dir", tr.out_dir, "Output directory")->required();
  c_train->add_flag("--gold", tr.gold, "Use gold scene features instead of perceived ones");
  c_train->add_option("--epochs", tr.tc.epochs, "Epochs")->capture_default_str();
  c_train->add_option("--lr", tr.tc.lr, "Peak learning rate")->capture_default_str();
  c_train->add_option("--batch-size", tr.tc.batch_size, "Questions per step")->capture_default_str();
  c_train->add_option("--warmup", tr.tc.warmup_steps, "Warmup steps")->capture_default_str();
  c_train->add_option("--patience", tr.tc.patience, "Early stopping patience (0 disables)")->capture_default_str();
  c_train->add_option("--schedule", tr.tc.schedule, "Learning rate after warmup")
      ->check(CLI::IsMember({"linear", "constant"}))
      ->capture_default_str();
  c_train->add_option("--clip", tr.tc.clip_norm, "Global gradient norm clip (0 disables)")->capture_default_str();

  Eval ev;
  CLI::App* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(c_eval, ev.common);
  c_eval->add_option("--checkpoint", ev.checkpoint, "Model checkpoint")->required();
  c_eval->add_option("--data", ev.data_dir, "Corpus directory")->required();
  c_eval->add_option("--out-dir", ev.out_dir, "Output directory")->required();
  c_eval->add_option("--split", ev.split, "Split")->check(CLI::IsMember(kSplits))->capture_default_str();
  c_eval->add_flag("--gold", ev.gold, "Use gold scene features");

  Exec ex;
  CLI::App* c_exec = app.add_subcommand("exec", "Execute one program on one scene");
  add_common(c_exec, ex.common);
  c_exec->add_option("--program", ex.program, "Program in compact syntax")->required();
  c_exec->add_option("--scene", ex.scene_path, "Scene JSONL (gold or scored)")->required();
  c_exec->add_option("--scene-id", ex.scene_id, "Scene id (default: first scene)");
  c_exec->add_option("--checkpoint", ex.checkpoint,
                     "Model checkpoint (default: hand-set model on the gold scene)");
  c_exec->add_option("--vocab", ex.vocab_path, "Vocabulary for the hand-set model");
  c_exec->add_option("--out", ex.out, "Write JSON here instead of stdout");
  c_exec->add_flag("--trace", ex.trace, "Emit the per-node trace");

  Perturb pt;
  CLI::App* c_pt = app.add_subcommand("perturb", "Accuracy under removal of low-weight operations");
  add_common(c_pt, pt.common);
  c_pt->add_option("--checkpoint", pt.checkpoint, "Model checkpoint")->required();
  c_pt->add_option("--data", pt.data_dir, "Corpus directory")->required();
  c_pt->add_option("--out-dir", pt.out_dir, "Output directory")->required();
  c_pt->add_option("--split", pt.split, "Split")->check(CLI::IsMember(kSplits))->capture_default_str();
  c_pt->add_option("--thresholds", pt.thresholds, "Logit thresholds, e.g. -inf,-2,-1,-0.5,0,inf")
      ->delimiter(',')
      ->allow_extra_args(false);
  c_pt->add_flag("--iterative", pt.iterative, "Re-predict weights after each removal pass");
  c_pt->add_flag("--easy-hard", pt.easy_hard, "Also report easy and hard subsets");
  c_pt->add_flag("--gold", pt.gold, "Use gold scene features");

  AnalyzeMagnitudes am;
  CLI::App* c_am = app.add_subcommand("analyze-magnitudes",
                                      "Concept frequency against learned magnitude");
  add_common(c_am, am.common);
  c_am->add_option("--checkpoint", am.checkpoint, "Model checkpoint")->required();
  c_am->add_option("--data", am.data_dir, "Corpus directory")->required();
  c_am->add_option("--out-dir", am.out_dir, "Output directory")->required();
  c_am->add_option("--split", am.split, "Split whose questions are counted")
      ->check(CLI::IsMember(kSplits))
      ->capture_default_str();

  AnalyzeWeights aw;
  CLI::App* c_aw = app.add_subcommand("analyze-weights", "Per-operation weights as JSONL");
  add_common(c_aw, aw.common);
  c_aw->add_option("--checkpoint", aw.checkpoint, "Model checkpoint")->required();
  c_aw->add_option("--data", aw.data_dir, "Corpus directory")->required();
  c_aw->add_option("--out", aw.out, "Output JSONL")->required();
  c_aw->add_option("--split", aw.split, "Split")->check(CLI::IsMember(kSplits))->capture_default_str();
  c_aw->add_option("--limit", aw.limit, "Stop after this many programs (0 = all)")->capture_default_str();

  GradCheck gc;
  CLI::App* c_gc = app.add_subcommand("grad-check",
                                      "Finite-difference check over programs using every module");
  add_common(c_gc, gc.common);
  c_gc->add_option("--mode", gc.mode, "Concept calibration mode")->check(CLI::IsMember(kModes))->capture_default_str();
  c_gc->add_option("--opcal", gc.opcal, "Operation calibration")->check(CLI::IsMember({"on", "off"}))->capture_default_str();
  c_gc->add_option("--step", gc.step, "Central difference step")->capture_default_str();
  c_gc->add_option("--floor", gc.floor, "Denominator floor of the relative error")->capture_default_str();
  c_gc->add_option("--tolerance", gc.tolerance, "Largest accepted relative error")->capture_default_str();
  c_gc->add_option("--out", gc.out, "Write JSON here instead of stdout");

  std::string replay_path;
  CLI::App* c_replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  c_replay->add_option("--manifest", replay_path, "Manifest JSON")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend() - 1);
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  if (c_replay->parsed()) {
    const json m = read_json(replay_path);
    return run(m.at("argv").get<std::vector<std::string>>());
  }

  CLI::App* sub = app.get_subcommands().front();
  Manifest man;
  man.command = sub->get_name();
  man.argv = args;
  man.config = option_snapshot(sub);
  const fs::path mpath = manifest_path_for(man.command, sub);

  bool ok = true;
  if (sub == c_gen) {
    man.seed = gen.common.seed;
    gen.run(man);
  } else if (sub == c_train) {
    man.seed = tr.common.seed;
    tr.run(man);
  } else if (sub == c_eval) {
    man.seed = ev.common.seed;
    ev.run(man);
  } else if (sub == c_exec) {
    man.seed = ex.common.seed;
    ex.run(man);
  } else if (sub == c_pt) {
    man.seed = pt.common.seed;
    pt.run(man);
  } else if (sub == c_am) {
    man.seed = am.common.seed;
    am.run(man);
  } else if (sub == c_aw) {
    man.seed = aw.common.seed;
    aw.run(man);
  } else if (sub == c_gc) {
    man.seed = gc.common.seed;
    ok = gc.run(man);
  }
  if (!mpath.empty()) man.write(mpath);
  return ok ? 0 : 1;
}

}  // namespace
}  // namespace calico

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  try {
    return calico::run(args);
  } catch (const calico::Error& e) {
    std::cerr << json({{"error", e.kind()}, {"message", e.what()}}).dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json({{"error", "InternalError"}, {"message", e.what()}}).dump() << "\n";
    return 3;
  }
}
