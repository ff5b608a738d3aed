// Copyright 2026 The qbit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace qbit {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major tensor of doubles. Used for full-precision masters,
// activations, gradients and kernel outputs.
class RealTensor {
 public:
  RealTensor() = default;
  explicit RealTensor(Shape shape, double fill = 0.0);
  RealTensor(Shape shape, std::vector<double> values);
  // 1-D tensor holding `values`.
  static RealTensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> span() { return values_; }
  std::span<const double> span() const { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // Same storage, new shape with identical element count.
  RealTensor reshaped(Shape shape) const;
  void fill(double v);

  bool all_finite() const;

  friend bool operator==(const RealTensor&, const RealTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

using Tensor = RealTensor;

// Throws InvalidArgument naming `what` if shapes differ.
void require_same_shape(const RealTensor& a, const RealTensor& b,
                        const char* what);

}  // namespace qbit
