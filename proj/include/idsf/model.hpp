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
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "idsf/attention.hpp"
#include "idsf/autodiff.hpp"
#include "idsf/config.hpp"
#include "idsf/contrastive.hpp"
#include "idsf/graph.hpp"
#include "idsf/propagation.hpp"

namespace idsf {

// (user, observed item, sampled unobserved item)
struct Triple {
  std::uint32_t user = 0;
  std::uint32_t pos = 0;
  std::uint32_t neg = 0;

  bool operator==(const Triple&) const = default;
};

template <typename T>
struct LossTerms {
  ad::Var<T> total;
  ad::Var<T> bpr;
  std::optional<ad::Var<T>> contrastive;
  std::optional<ad::Var<T>> l2;
};

// Final representations: users are e_u^s, items are e_i^c + e_i^s.
template <typename T>
struct Embeddings {
  Tensor<T> users;
  Tensor<T> items;
  Tensor<T> item_content;    // e^c, empty under no_content
  Tensor<T> item_structure;  // e^s
};

// y_ui = <e_u^s, e_i^c + e_i^s>
template <typename T>
T predict(std::span<const T> user_structure, std::span<const T> item_content, std::span<const T> item_structure) {
  if (user_structure.size() != item_structure.size() ||
      (!item_content.empty() && item_content.size() != item_structure.size())) {
    throw DimensionError("predict: vector widths differ");
  }
  T acc = 0;
  for (std::size_t k = 0; k < user_structure.size(); ++k) {
    const T item = item_structure[k] + (item_content.empty() ? T(0) : item_content[k]);
    acc += user_structure[k] * item;
  }
  return acc;
}

// mean over triples of -ln sigma(y_ui - y_uj)
template <typename T>
ad::Var<T> bpr_loss(ad::Var<T> pos_scores, ad::Var<T> neg_scores) {
  return ad::scale(ad::mean(ad::log_sigmoid(ad::sub(pos_scores, neg_scores))), T(-1));
}

inline Tensor<double> xavier_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<double> t(rows, cols);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

template <typename T>
class IdsfModel {
 public:
  struct Features {
    std::shared_ptr<const Tensor<T>> text;    // item_count x raw_t
    std::shared_ptr<const Tensor<T>> visual;  // item_count x raw_v
  };

  IdsfModel(ModelConfig config, std::shared_ptr<const BipartiteGraph> graph, Features features)
      : config_(std::move(config)), graph_(std::move(graph)), features_(std::move(features)) {
    config_.validate();
    if (!graph_) throw ContractError("model needs a graph");
    auto check = [&](bool on, const std::shared_ptr<const Tensor<T>>& f, const char* what) {
      if (!on) return;
      if (!f) throw ConfigError(std::string(what) + " features are missing but the modality is enabled");
      if (f->rows() != graph_->item_count()) {
        throw DimensionError(std::string(what) + " feature rows do not match item count");
      }
    };
    check(config_.modalities.text, features_.text, "text");
    check(config_.modalities.visual, features_.visual, "visual");
    initialize();
  }

  const ModelConfig& config() const { return config_; }
  const BipartiteGraph& graph() const { return *graph_; }
  std::size_t user_count() const { return graph_->user_count(); }
  std::size_t item_count() const { return graph_->item_count(); }

  ad::ParameterSet<T>& params() { return params_; }
  const ad::ParameterSet<T>& params() const { return params_; }

  // Replaces parameter values; names and shapes must match this model.
  void load_parameters(const ad::ParameterSet<T>& values) {
    if (values.names() != params_.names()) throw ConfigError("checkpoint parameters do not match the model layout");
    for (const auto& name : params_.names()) {
      if (!(values.at(name).shape() == params_.at(name).shape())) {
        throw ConfigError("checkpoint tensor " + name + " has shape " + values.at(name).shape().str() + ", expected " +
                          params_.at(name).shape().str());
      }
    }
    params_ = values;
  }

  // Re-draws every parameter with Xavier uniform from config().seed.
  void initialize() {
    params_ = {};
    std::mt19937_64 rng(config_.seed);
    const std::size_t d = config_.dim;
    auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
      params_.add(name, xavier_uniform(rows, cols, rng).template cast<T>());
    };
    auto add_block = [&](const std::string& prefix) {
      add(prefix + ".q", d, 1);
      add(prefix + ".W", d, d);
      add(prefix + ".b", 1, d);
    };
    const auto& m = config_.modalities;
    if (m.text) {
      add("proj_t.W", features_.text->cols(), d);
      add("proj_t.b", 1, d);
    }
    if (m.visual) {
      add("proj_v.W", features_.visual->cols(), d);
      add("proj_v.b", 1, d);
    }
    if (config_.needs_item_ids()) {
      if (m.text) add("item_id_t", item_count(), d);
      if (m.visual) add("item_id_v", item_count(), d);
    }
    add("user_id", user_count(), d);
    if (config_.user_layer0 == UserLayer0::kPerModality) {
      if (m.text) add("user_id_t", user_count(), d);
      if (m.visual) add("user_id_v", user_count(), d);
    }
    if (config_.enhances_content()) {
      if (m.text) add_block("att_text");
      if (m.visual) add_block("att_visual");
    }
    if (config_.uses_content() && m.both()) add_block("att_vt");
    if (m.both()) {
      add_block("att_struct_item");
      add_block("att_struct_user");
    }
  }

  struct Forward {
    std::optional<ad::Var<T>> projected_text, projected_visual;
    ad::Var<T> user_structure;  // all users
    ad::Var<T> item_structure;  // all items
    std::optional<LayerStack<T>> text_layers, visual_layers;
  };

  // Projections and both structural modules over the whole graph.
  Forward forward_structure(ad::Tape<T>& tape) const {
    Forward f;
    const auto& m = config_.modalities;
    const double gamma = config_.effective_gamma();
    auto user_id = tape.parameter(params_, "user_id");
    std::vector<ad::Var<T>> item_means, user_means;
    auto run = [&](bool on, const std::shared_ptr<const Tensor<T>>& feats, const std::string& tag,
                   std::optional<ad::Var<T>>& projected, std::optional<LayerStack<T>>& layers) {
      if (!on) return;
      projected = ad::add_row(ad::matmul(tape.constant_ref(*feats), tape.parameter(params_, "proj_" + tag + ".W")),
                              tape.parameter(params_, "proj_" + tag + ".b"));
      ad::Var<T> user0 = config_.user_layer0 == UserLayer0::kPerModality ? tape.parameter(params_, "user_id_" + tag)
                                                                          : user_id;
      std::optional<ad::Var<T>> item_id;
      if (gamma > 0.0) item_id = tape.parameter(params_, "item_id_" + tag);
      layers = propagate(*graph_, *projected, user0, item_id, std::optional<ad::Var<T>>(user_id), gamma,
                         config_.layers);
      item_means.push_back(layer_mean(layers->items));
      user_means.push_back(layer_mean(layers->users));
    };
    run(m.text, features_.text, "t", f.projected_text, f.text_layers);
    run(m.visual, features_.visual, "v", f.projected_visual, f.visual_layers);
    std::optional<AttentionBlock<T>> item_block, user_block;
    if (m.both()) {
      item_block = AttentionBlock<T>::bind(tape, params_, "att_struct_item");
      user_block = AttentionBlock<T>::bind(tape, params_, "att_struct_user");
    }
    f.item_structure = structural_representation(item_means, item_block).representation;
    f.user_structure = structural_representation(user_means, user_block).representation;
    return f;
  }

  ContentState<T> content(ad::Tape<T>& tape, const Forward& f, const std::vector<std::uint32_t>& items) const {
    ModalityMask mask = config_.modalities;
    mask.enhanced = config_.enhances_content();
    return content_representation(tape, params_, f.projected_text, f.projected_visual, items, mask);
  }

  // L = L_BPR + beta L_C + lambda ||Theta||^2 for one batch of triples.
  LossTerms<T> loss(ad::Tape<T>& tape, std::span<const Triple> batch) const {
    if (batch.empty()) throw ContractError("empty training batch");
    Forward f = forward_structure(tape);
    std::vector<std::uint32_t> users, pos, neg;
    for (const auto& t : batch) {
      users.push_back(t.user);
      pos.push_back(t.pos);
      neg.push_back(t.neg);
    }
    auto user_rows = ad::gather_rows(f.user_structure, users);
    auto pos_items = ad::gather_rows(f.item_structure, pos);
    auto neg_items = ad::gather_rows(f.item_structure, neg);

    std::optional<ContentState<T>> cs;
    if (config_.uses_content()) {
      std::vector<std::uint32_t> item_set;
      if (config_.negatives == NegativesMode::kFullCatalog) {
        item_set.resize(item_count());
        for (std::uint32_t i = 0; i < item_set.size(); ++i) item_set[i] = i;
      } else {
        item_set = pos;
        item_set.insert(item_set.end(), neg.begin(), neg.end());
        std::sort(item_set.begin(), item_set.end());
        item_set.erase(std::unique(item_set.begin(), item_set.end()), item_set.end());
      }
      cs = content(tape, f, item_set);
      auto local = [&](const std::vector<std::uint32_t>& ids) {
        std::vector<std::uint32_t> out;
        out.reserve(ids.size());
        for (auto i : ids) {
          out.push_back(static_cast<std::uint32_t>(std::lower_bound(item_set.begin(), item_set.end(), i) -
                                                   item_set.begin()));
        }
        return out;
      };
      pos_items = ad::add(pos_items, ad::gather_rows(cs->content, local(pos)));
      neg_items = ad::add(neg_items, ad::gather_rows(cs->content, local(neg)));
    }

    LossTerms<T> terms;
    terms.bpr = bpr_loss(ad::rowdot(user_rows, pos_items), ad::rowdot(user_rows, neg_items));
    terms.total = terms.bpr;
    if (cs && config_.uses_contrast()) {
      terms.contrastive = total_contrastive(*cs, ContrastiveOptions{config_.tau, config_.temperature});
      if (terms.contrastive) {
        terms.total = ad::add(terms.total, ad::scale(*terms.contrastive, static_cast<T>(config_.beta)));
      }
    }
    if (config_.lambda > 0.0) {
      std::optional<ad::Var<T>> l2;
      for (const auto& name : params_.names()) {
        auto sq = ad::sum_squares(tape.parameter(params_, name));
        l2 = l2 ? ad::add(*l2, sq) : sq;
      }
      terms.l2 = *l2;
      terms.total = ad::add(terms.total, ad::scale(*l2, static_cast<T>(config_.lambda)));
    }
    return terms;
  }

  // Inference over the whole catalog.
  Embeddings<T> embeddings() const {
    ad::Tape<T> tape(false);
    Forward f = forward_structure(tape);
    Embeddings<T> e;
    e.users = f.user_structure.value();
    e.item_structure = f.item_structure.value();
    e.items = e.item_structure;
    if (config_.uses_content()) {
      std::vector<std::uint32_t> all(item_count());
      for (std::uint32_t i = 0; i < all.size(); ++i) all[i] = i;
      e.item_content = content(tape, f, all).content.value();
      for (std::size_t k = 0; k < e.items.size(); ++k) e.items[k] += e.item_content[k];
    }
    return e;
  }

  // Scores for a block of users against candidate items.
  Tensor<T> score(const std::vector<std::uint32_t>& users, const std::vector<std::uint32_t>& items) const {
    const Embeddings<T> e = embeddings();
    Tensor<T> out(users.size(), items.size());
    const std::span<const T> no_content;
    for (std::size_t r = 0; r < users.size(); ++r) {
      for (std::size_t c = 0; c < items.size(); ++c) {
        out(r, c) = predict<T>(e.users.row_span(users[r]),
                               e.item_content.empty() ? no_content : e.item_content.row_span(items[c]),
                               e.item_structure.row_span(items[c]));
      }
    }
    return out;
  }

 private:
  ModelConfig config_;
  std::shared_ptr<const BipartiteGraph> graph_;
  Features features_;
  ad::ParameterSet<T> params_;
};

}  // namespace idsf
