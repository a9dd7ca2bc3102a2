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

#include <cstdint>
#include <vector>

#include "idsf/error.hpp"

namespace idsf {

// Compressed sparse rows with double-precision weights. Row r's entries are
// cols[offsets[r] .. offsets[r+1]).
struct CsrMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::uint32_t> indices;
  std::vector<double> weights;

  std::size_t nnz() const { return indices.size(); }
  std::size_t degree(std::size_t r) const { return offsets[r + 1] - offsets[r]; }

  // y = A x for row-major x of width `width`; y is overwritten.
  template <typename T>
  void multiply(const T* x, std::size_t width, T* y) const {
    for (std::size_t r = 0; r < rows; ++r) {
      T* out = y + r * width;
      for (std::size_t c = 0; c < width; ++c) out[c] = T(0);
      for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) {
        const T w = static_cast<T>(weights[e]);
        const T* in = x + static_cast<std::size_t>(indices[e]) * width;
        for (std::size_t c = 0; c < width; ++c) out[c] += w * in[c];
      }
    }
  }

  // y += A^T x, visiting rows in order so the accumulation order is fixed.
  template <typename T>
  void multiply_transposed_add(const T* x, std::size_t width, T* y) const {
    for (std::size_t r = 0; r < rows; ++r) {
      const T* in = x + r * width;
      for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) {
        const T w = static_cast<T>(weights[e]);
        T* out = y + static_cast<std::size_t>(indices[e]) * width;
        for (std::size_t c = 0; c < width; ++c) out[c] += w * in[c];
      }
    }
  }

  CsrMatrix transposed() const {
    CsrMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.offsets.assign(cols + 1, 0);
    for (auto c : indices) ++t.offsets[c + 1];
    for (std::size_t c = 0; c < cols; ++c) t.offsets[c + 1] += t.offsets[c];
    t.indices.resize(nnz());
    t.weights.resize(nnz());
    std::vector<std::size_t> cursor(t.offsets.begin(), t.offsets.end() - 1);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) {
        const std::size_t slot = cursor[indices[e]]++;
        t.indices[slot] = static_cast<std::uint32_t>(r);
        t.weights[slot] = weights[e];
      }
    }
    return t;
  }
};

}  // namespace idsf
