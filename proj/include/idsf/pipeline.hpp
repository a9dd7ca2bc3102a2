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

#include <memory>
#include <optional>

#include "idsf/dataio.hpp"
#include "idsf/graph.hpp"
#include "idsf/model.hpp"
#include "idsf/synthetic.hpp"

namespace idsf {

// A split dataset with its feature tables aligned to dense item indices.
struct Problem {
  Dataset dataset;
  std::optional<ModalFeatureTable> text;
  std::optional<ModalFeatureTable> visual;
};

inline Problem synthetic_problem(const SyntheticData& data, const SplitOptions& split) {
  Problem p{split_dataset(data.records, split), std::nullopt, std::nullopt};
  const auto& ids = p.dataset.item_ids();
  p.text = align_features(data.text.values, data.item_ids, ids, Modality::kText, "synthetic", true);
  p.visual = align_features(data.visual.values, data.item_ids, ids, Modality::kVisual, "synthetic", true);
  return p;
}

inline Problem synthetic_problem(const SyntheticOptions& opts, const SplitOptions& split = {}) {
  return synthetic_problem(generate_synthetic(opts), split);
}

// Builds the training graph and a freshly initialized model. Feature tables
// for disabled modalities are ignored.
template <typename T>
IdsfModel<T> make_model(const ModelConfig& cfg, const Problem& p) {
  cfg.validate();
  auto graph = std::make_shared<const BipartiteGraph>(BipartiteGraph::from_training(p.dataset));
  typename IdsfModel<T>::Features f;
  auto take = [&](bool on, const std::optional<ModalFeatureTable>& table, const char* what) {
    std::shared_ptr<const Tensor<T>> out;
    if (!on) return out;
    if (!table) throw ConfigError(std::string(what) + " features are missing but the modality is enabled");
    if constexpr (std::is_same_v<T, float>) {
      out = std::make_shared<const Tensor<T>>(table->values);
    } else {
      out = std::make_shared<const Tensor<T>>(table->values.template cast<T>());
    }
    return out;
  };
  f.text = take(cfg.modalities.text, p.text, "text");
  f.visual = take(cfg.modalities.visual, p.visual, "visual");
  return IdsfModel<T>(cfg, std::move(graph), std::move(f));
}

}  // namespace idsf
