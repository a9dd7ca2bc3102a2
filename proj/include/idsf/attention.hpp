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
#include <string>
#include <vector>

#include "idsf/autodiff.hpp"
#include "idsf/config.hpp"

namespace idsf {

// Parameters of one attention block: score_m = q^T tanh(W e^m + b).
// Stored as q (d x 1), W (d x d), b (1 x d) under "<prefix>.q" etc.
template <typename T>
struct AttentionBlock {
  ad::Var<T> q;
  ad::Var<T> w;
  ad::Var<T> b;

  static AttentionBlock bind(ad::Tape<T>& tape, const ad::ParameterSet<T>& params, const std::string& prefix) {
    return {tape.parameter(params, prefix + ".q"), tape.parameter(params, prefix + ".W"),
            tape.parameter(params, prefix + ".b")};
  }

  std::size_t dim() const { return w.rows(); }
};

template <typename T>
struct Attended {
  ad::Var<T> fused;    // n x d
  ad::Var<T> weights;  // n x 2, rows sum to 1
};

namespace detail {
template <typename T>
ad::Var<T> attention_score(const AttentionBlock<T>& block, ad::Var<T> x) {
  // rows of x are e^m, so W e^m is x W^T
  return ad::matmul(ad::tanh(ad::add_row(ad::matmul(x, block.w, false, true), block.b)), block.q);
}
}  // namespace detail

// Fuses two aligned n x d inputs: alpha = softmax over the two scores,
// output = alpha_0 a + alpha_1 b per row.
template <typename T>
Attended<T> attend(const AttentionBlock<T>& block, ad::Var<T> a, ad::Var<T> b) {
  const std::size_t d = block.dim();
  if (a.cols() != d || b.cols() != d || a.rows() != b.rows()) {
    throw DimensionError("attend: inputs " + a.shape().str() + ", " + b.shape().str() + " for block width " +
                         std::to_string(d));
  }
  auto weights = ad::softmax_rows(ad::concat_cols(detail::attention_score(block, a), detail::attention_score(block, b)));
  auto fused = ad::add(ad::scale_rows(a, ad::column(weights, 0)), ad::scale_rows(b, ad::column(weights, 1)));
  return {fused, weights};
}

// Content-side representations for a set of items. Missing members mean the
// corresponding branch is disabled by the modality mask or ablation.
template <typename T>
struct ContentState {
  std::vector<std::uint32_t> items;
  std::optional<ad::Var<T>> text, visual;          // projected salient features
  std::optional<ad::Var<T>> text_id, visual_id;    // e^{tid}, e^{vid}
  std::optional<ad::Var<T>> text_fused, visual_fused;  // e^{t'}, e^{v'}
  ad::Var<T> content;                               // e^c
  std::optional<ad::Var<T>> text_weights, visual_weights, vt_weights;
};

// Parameter names used by the content module.
struct ContentParamNames {
  std::string text_block = "att_text";
  std::string visual_block = "att_visual";
  std::string vt_block = "att_vt";
  std::string text_ids = "item_id_t";
  std::string visual_ids = "item_id_v";
};

// Hierarchical fusion over `items`: text attention (e^t, e^tid) -> e^t',
// visual attention (e^v, e^vid) -> e^v', VT attention (e^t', e^v') -> e^c.
// Without enhancement the modal branches pass e^t / e^v through unchanged;
// with a single modality the VT step is bypassed.
//
// `projected_text` / `projected_visual` hold all items' projected features.
template <typename T>
ContentState<T> content_representation(ad::Tape<T>& tape, const ad::ParameterSet<T>& params,
                                       std::optional<ad::Var<T>> projected_text,
                                       std::optional<ad::Var<T>> projected_visual,
                                       const std::vector<std::uint32_t>& items, const ModalityMask& mask,
                                       const ContentParamNames& names = {}) {
  if (!mask.text && !mask.visual) throw ConfigError("content representation needs at least one modality");
  ContentState<T> st;
  st.items = items;
  auto branch = [&](bool on, std::optional<ad::Var<T>> projected, const std::string& ids, const std::string& block,
                    std::optional<ad::Var<T>>& salient, std::optional<ad::Var<T>>& subtle,
                    std::optional<ad::Var<T>>& fused, std::optional<ad::Var<T>>& weights) {
    if (!on) return;
    if (!projected) throw ContractError("enabled modality without projected features");
    salient = ad::gather_rows(*projected, items);
    if (!mask.enhanced) {
      fused = salient;
      return;
    }
    subtle = ad::gather_rows(tape.parameter(params, ids), items);
    auto out = attend(AttentionBlock<T>::bind(tape, params, block), *salient, *subtle);
    fused = out.fused;
    weights = out.weights;
  };
  branch(mask.text, projected_text, names.text_ids, names.text_block, st.text, st.text_id, st.text_fused,
         st.text_weights);
  branch(mask.visual, projected_visual, names.visual_ids, names.visual_block, st.visual, st.visual_id,
         st.visual_fused, st.visual_weights);
  if (mask.both()) {
    auto out = attend(AttentionBlock<T>::bind(tape, params, names.vt_block), *st.text_fused, *st.visual_fused);
    st.content = out.fused;
    st.vt_weights = out.weights;
  } else {
    st.content = mask.text ? *st.text_fused : *st.visual_fused;
  }
  return st;
}

}  // namespace idsf
