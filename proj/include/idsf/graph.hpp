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

#include <cmath>
#include <cstdint>
#include <vector>

#include "idsf/autodiff.hpp"
#include "idsf/dataio.hpp"
#include "idsf/sparse.hpp"

namespace idsf {

enum class Direction {
  kUsersToItems,  // item rows gather from their users
  kItemsToUsers,  // user rows gather from their items
};

// Bipartite user-item graph over training edges. Each edge carries
// c_ui = 1 / (sqrt|N_u| sqrt|N_i|); the two CSR views are transposes of
// each other, so c_ui == c_iu by construction.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;

  BipartiteGraph(std::size_t users, std::size_t items, const std::vector<Edge>& edges) {
    std::vector<std::size_t> user_deg(users, 0), item_deg(items, 0);
    for (const auto& e : edges) {
      if (e.user >= users || e.item >= items) throw DataError("graph edge out of range");
      ++user_deg[e.user];
      ++item_deg[e.item];
    }
    std::vector<Edge> sorted = edges;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    if (sorted.size() != edges.size()) throw DataError("duplicate edge in graph input");

    user_view_.rows = users;
    user_view_.cols = items;
    user_view_.offsets.assign(users + 1, 0);
    for (const auto& e : sorted) ++user_view_.offsets[e.user + 1];
    for (std::size_t u = 0; u < users; ++u) user_view_.offsets[u + 1] += user_view_.offsets[u];
    user_view_.indices.reserve(sorted.size());
    user_view_.weights.reserve(sorted.size());
    for (const auto& e : sorted) {
      user_view_.indices.push_back(e.item);
      user_view_.weights.push_back(1.0 / (std::sqrt(static_cast<double>(user_deg[e.user])) *
                                          std::sqrt(static_cast<double>(item_deg[e.item]))));
    }
    item_view_ = user_view_.transposed();
  }

  static BipartiteGraph from_training(const Dataset& ds) {
    if (ds.train().empty()) throw DataError("cannot build a graph without training edges");
    return BipartiteGraph(ds.user_count(), ds.item_count(), ds.train());
  }

  std::size_t user_count() const { return user_view_.rows; }
  std::size_t item_count() const { return user_view_.cols; }
  std::size_t edge_count() const { return user_view_.nnz(); }

  // Rows are users, entries are (item, c_ui).
  const CsrMatrix& user_adjacency() const { return user_view_; }
  // Rows are items, entries are (user, c_ui).
  const CsrMatrix& item_adjacency() const { return item_view_; }

  const CsrMatrix& target_view(Direction d) const {
    return d == Direction::kUsersToItems ? item_view_ : user_view_;
  }

  double coefficient(std::uint32_t user, std::uint32_t item) const {
    for (std::size_t e = user_view_.offsets[user]; e < user_view_.offsets[user + 1]; ++e) {
      if (user_view_.indices[e] == item) return user_view_.weights[e];
    }
    return 0.0;
  }

  // target[x] = sum_{y in N_x} c_xy source[y]; isolated targets get zeros.
  template <typename T>
  Tensor<T> aggregate(Direction d, const Tensor<T>& source) const {
    const CsrMatrix& m = target_view(d);
    if (source.rows() != m.cols) {
      throw DimensionError("aggregate: source has " + std::to_string(source.rows()) + " rows, expected " +
                           std::to_string(m.cols));
    }
    Tensor<T> out(m.rows, source.cols());
    m.multiply(source.data(), source.cols(), out.data());
    return out;
  }

  // Differentiable form; the backward pass aggregates along reversed edges.
  template <typename T>
  ad::Var<T> aggregate(Direction d, ad::Var<T> source) const {
    return ad::spmm(target_view(d), source);
  }

 private:
  CsrMatrix user_view_;
  CsrMatrix item_view_;
};

}  // namespace idsf
