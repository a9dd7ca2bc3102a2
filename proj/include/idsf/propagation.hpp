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

#include <optional>
#include <vector>

#include "idsf/attention.hpp"
#include "idsf/autodiff.hpp"
#include "idsf/graph.hpp"

namespace idsf {

// Layer outputs of one modality's propagation; index 0 is the input layer.
template <typename T>
struct LayerStack {
  std::vector<ad::Var<T>> items;
  std::vector<ad::Var<T>> users;
};

// Lightweight propagation with ID retention, for k = 1..layers:
//   item^(k) = sum_{u in N_i} c_ui user^(k-1) + gamma * item_id
//   user^(k) = sum_{i in N_u} c_ui item^(k-1) + gamma * user_id
// The gamma terms are skipped when gamma == 0 or the table is absent.
template <typename T>
LayerStack<T> propagate(const BipartiteGraph& graph, ad::Var<T> item_layer0, ad::Var<T> user_layer0,
                        std::optional<ad::Var<T>> item_id, std::optional<ad::Var<T>> user_id, double gamma,
                        std::size_t layers) {
  if (layers == 0) throw ContractError("propagation needs at least one layer");
  if (gamma < 0.0) throw ContractError("gamma must be non-negative");
  if (item_layer0.rows() != graph.item_count() || user_layer0.rows() != graph.user_count()) {
    throw DimensionError("propagate: layer-0 rows do not match the graph");
  }
  LayerStack<T> stack;
  stack.items.push_back(item_layer0);
  stack.users.push_back(user_layer0);
  const bool retain = gamma > 0.0;
  std::optional<ad::Var<T>> item_keep, user_keep;
  if (retain && item_id) item_keep = ad::scale(*item_id, static_cast<T>(gamma));
  if (retain && user_id) user_keep = ad::scale(*user_id, static_cast<T>(gamma));
  for (std::size_t k = 1; k <= layers; ++k) {
    auto items = graph.aggregate(Direction::kUsersToItems, stack.users.back());
    auto users = graph.aggregate(Direction::kItemsToUsers, stack.items.back());
    if (item_keep) items = ad::add(items, *item_keep);
    if (user_keep) users = ad::add(users, *user_keep);
    stack.items.push_back(items);
    stack.users.push_back(users);
  }
  return stack;
}

// Unweighted mean of layers 0..K.
template <typename T>
ad::Var<T> layer_mean(const std::vector<ad::Var<T>>& layers) {
  if (layers.empty()) throw ContractError("layer_mean of empty stack");
  ad::Var<T> total = layers.front();
  for (std::size_t k = 1; k < layers.size(); ++k) total = ad::add(total, layers[k]);
  return ad::scale(total, static_cast<T>(1.0 / static_cast<double>(layers.size())));
}

template <typename T>
struct StructuralOutput {
  ad::Var<T> representation;
  std::optional<ad::Var<T>> weights;  // n x 2 when two modalities were combined
};

// Combines per-modality layer means with a structural attention block. A
// single modality passes through.
template <typename T>
StructuralOutput<T> structural_representation(const std::vector<ad::Var<T>>& modal_means,
                                              const std::optional<AttentionBlock<T>>& block) {
  if (modal_means.size() == 1) return {modal_means.front(), std::nullopt};
  if (modal_means.size() != 2 || !block) throw ContractError("structural combination expects two modalities and a block");
  auto out = attend(*block, modal_means[0], modal_means[1]);
  return {out.fused, out.weights};
}

}  // namespace idsf
