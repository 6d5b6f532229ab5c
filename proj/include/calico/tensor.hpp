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

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace calico::ad {

// Dense row-major matrix of doubles. Vectors are 1 x n rows; scalars 1 x 1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {}

  static Tensor row(std::vector<double> values) {
    Tensor t;
    t.rows = 1;
    t.cols = static_cast<int>(values.size());
    t.data = std::move(values);
    return t;
  }
  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor matrix(int r, int c, std::initializer_list<double> values);

  int size() const { return rows * cols; }
  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
  double& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<std::size_t>(i)]; }

  std::string shape_string() const;
  bool operator==(const Tensor& o) const = default;
};

}  // namespace calico::ad
