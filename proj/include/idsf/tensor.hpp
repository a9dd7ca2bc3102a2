/*
 * Copyright 2026 The IDSF Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "idsf/error.hpp"

namespace idsf {

// Every tensor in the engine is a row-major matrix; vectors are n x 1 or
// 1 x n and scalars are 1 x 1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, T fill = T(0))
      : shape_{rows, cols}, values_(rows * cols, fill) {}
  Tensor(Shape shape, std::vector<T> values) : shape_(shape), values_(std::move(values)) {
    if (shape_.size() != values_.size()) {
      throw DimensionError("tensor shape " + shape_.str() + " does not match " +
                           std::to_string(values_.size()) + " values");
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{1, 1}, {v}); }
  static Tensor column(std::vector<T> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n, 1}, std::move(v));
  }
  static Tensor row(std::vector<T> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{1, n}, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::vector<T>& values() { return values_; }
  const std::vector<T>& values() const { return values_; }

  T& operator()(std::size_t r, std::size_t c) { return values_[r * shape_.cols + c]; }
  T operator()(std::size_t r, std::size_t c) const { return values_[r * shape_.cols + c]; }
  T& operator[](std::size_t i) { return values_[i]; }
  T operator[](std::size_t i) const { return values_[i]; }

  std::span<T> row_span(std::size_t r) { return {values_.data() + r * shape_.cols, shape_.cols}; }
  std::span<const T> row_span(std::size_t r) const {
    return {values_.data() + r * shape_.cols, shape_.cols};
  }

  T item() const {
    if (values_.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_.str());
    return values_[0];
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> values_;
};

}  // namespace idsf
