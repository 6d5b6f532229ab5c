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

#include "calico/params.hpp"

#include <cmath>
#include <fstream>

#include "calico/errors.hpp"

namespace calico::ad {

ParamId ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name) != 0) {
    throw ConfigError("duplicate parameter name '" + name + "'");
  }
  const ParamId id = static_cast<ParamId>(values_.size());
  names_.push_back(name);
  values_.push_back(std::move(init));
  index_.emplace(name, id);
  return id;
}

bool ParamStore::contains(const std::string& name) const {
  return index_.count(name) != 0;
}

ParamId ParamStore::id(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw UnknownSymbol("no parameter named '" + name + "'");
  return it->second;
}

long long ParamStore::total_elements() const {
  long long n = 0;
  for (const Tensor& t : values_) n += t.size();
  return n;
}

nlohmann::json ParamStore::to_json() const {
  nlohmann::json params = nlohmann::json::object();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Tensor& t = values_[i];
    params[names_[i]] = {{"shape", {t.rows, t.cols}}, {"data", t.data}};
  }
  return {{"format_version", 1}, {"params", std::move(params)}};
}

void ParamStore::load_json(const nlohmann::json& j, bool require_all) {
  if (!j.is_object() || j.value("format_version", 0) != 1 ||
      !j.contains("params") || !j["params"].is_object()) {
    throw SchemaError("checkpoint must have format_version 1 and a params object");
  }
  const auto& params = j["params"];
  for (auto it = params.begin(); it != params.end(); ++it) {
    auto found = index_.find(it.key());
    if (found == index_.end()) {
      throw SchemaError("checkpoint parameter '" + it.key() +
                        "' is not registered in this model");
    }
    Tensor& dst = values_[static_cast<std::size_t>(found->second)];
    const auto& shape = it.value().at("shape");
    const auto& data = it.value().at("data");
    if (shape.size() != 2 || shape[0].get<int>() != dst.rows ||
        shape[1].get<int>() != dst.cols ||
        data.size() != static_cast<std::size_t>(dst.size())) {
      throw SchemaError("shape mismatch for parameter '" + it.key() + "'");
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      dst.data[k] = data[k].get<double>();
      if (!std::isfinite(dst.data[k])) {
        throw SchemaError("non-finite value in parameter '" + it.key() + "'");
      }
    }
  }
  if (require_all) {
    for (const std::string& n : names_) {
      if (!params.contains(n)) {
        throw SchemaError("checkpoint lacks parameter '" + n + "'");
      }
    }
  }
}

void ParamStore::save(const std::string& path, const nlohmann::json& meta) const {
  nlohmann::json j = to_json();
  if (!meta.is_null()) j["meta"] = meta;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out << j.dump() << "\n";
  if (!out) throw IoError("failed writing checkpoint '" + path + "'");
}

nlohmann::json ParamStore::load(const std::string& path, bool require_all) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  load_json(j, require_all);
  return j.contains("meta") ? j["meta"] : nlohmann::json();
}

GradStore::GradStore(const ParamStore& store) {
  grads_.reserve(static_cast<std::size_t>(store.size()));
  for (ParamId i = 0; i < store.size(); ++i) {
    const Tensor& v = store.value(i);
    grads_.emplace_back(v.rows, v.cols, 0.0);
  }
}

void GradStore::zero() {
  for (Tensor& g : grads_) std::fill(g.data.begin(), g.data.end(), 0.0);
}

void GradStore::add(const GradStore& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    Tensor& g = grads_[i];
    const Tensor& o = other.grads_[i];
    for (std::size_t k = 0; k < g.data.size(); ++k) g.data[k] += o.data[k];
  }
}

void GradStore::scale(double s) {
  for (Tensor& g : grads_)
    for (double& v : g.data) v *= s;
}

double GradStore::global_norm() const {
  double s = 0.0;
  for (const Tensor& g : grads_)
    for (double v : g.data) s += v * v;
  return std::sqrt(s);
}

}  // namespace calico::ad
