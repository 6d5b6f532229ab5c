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

#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "calico/tensor.hpp"

namespace calico::ad {

using ParamId = int;

// Named learnable arrays. Names are unique; checkpoints address parameters by
// name so the registration order may change between versions.
class ParamStore {
 public:
  ParamId add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const;
  ParamId id(const std::string& name) const;

  Tensor& value(ParamId id) { return values_.at(static_cast<std::size_t>(id)); }
  const Tensor& value(ParamId id) const {
    return values_.at(static_cast<std::size_t>(id));
  }
  const std::string& name(ParamId id) const {
    return names_.at(static_cast<std::size_t>(id));
  }
  int size() const { return static_cast<int>(values_.size()); }
  long long total_elements() const;

  // {"format_version": 1, "params": {name: {"shape": [r, c], "data": [...]}}}
  nlohmann::json to_json() const;
  // Restores every parameter present in `j`. Unknown names and shape
  // mismatches are SchemaErrors; parameters missing from `j` are left as-is
  // unless `require_all` is set.
  void load_json(const nlohmann::json& j, bool require_all = true);

  void save(const std::string& path, const nlohmann::json& meta = {}) const;
  // Returns the checkpoint's "meta" object (null when absent).
  nlohmann::json load(const std::string& path, bool require_all = true);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, ParamId> index_;
};

// Gradient accumulators aligned with a ParamStore.
class GradStore {
 public:
  GradStore() = default;
  explicit GradStore(const ParamStore& store);

  void zero();
  Tensor& operator[](ParamId id) { return grads_.at(static_cast<std::size_t>(id)); }
  const Tensor& operator[](ParamId id) const {
    return grads_.at(static_cast<std::size_t>(id));
  }
  int size() const { return static_cast<int>(grads_.size()); }
  void add(const GradStore& other);
  void scale(double s);
  double global_norm() const;

 private:
  std::vector<Tensor> grads_;
};

}  // namespace calico::ad
