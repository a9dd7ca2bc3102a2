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

#include <vector>

#include "idsf/attention.hpp"
#include "idsf/autodiff.hpp"
#include "idsf/config.hpp"

namespace idsf {

struct ContrastiveOptions {
  double tau = 0.5;
  TemperatureMode temperature = TemperatureMode::kStandard;
};

namespace detail {

template <typename T>
ad::Var<T> temperature_exp(ad::Var<T> sims, const ContrastiveOptions& opts) {
  const T inv_tau = static_cast<T>(1.0 / opts.tau);
  if (opts.temperature == TemperatureMode::kLiteral) return ad::scale(ad::exp(sims), inv_tau);
  return ad::exp(ad::scale(sims, inv_tau));
}

// Mean over rows of log(I_ii / (I_ii + I_ij)) given the anchor-vs-target
// similarity matrix and the anchor-vs-anchor one.
template <typename T>
ad::Var<T> info_from_similarities(ad::Var<T> cross, ad::Var<T> self, const ContrastiveOptions& opts) {
  auto e_cross = temperature_exp(cross, opts);
  auto e_self = temperature_exp(self, opts);
  auto positive = ad::diag(e_cross);
  // I_ii + sum_{j != i} [cross_ij + self_ij]
  auto denom = ad::sub(ad::add(ad::row_sum(e_cross), ad::row_sum(e_self)), ad::diag(e_self));
  return ad::mean(ad::sub(ad::log(positive), ad::log(denom)));
}

template <typename T>
void require_batch(ad::Var<T> rows) {
  if (rows.rows() < 2) throw ContractError("contrastive loss needs a batch of at least 2 items");
}

}  // namespace detail

// Batch mean of I(e^m_i, e^fused_i) with in-batch negatives:
//   I_ii = exp(f(x_i, y_i)/tau)
//   I_ij = sum_{j != i} exp(f(x_i, y_j)/tau) + exp(f(x_i, x_j)/tau)
// where f is cosine similarity and rows of `anchor` and `target` are aligned.
template <typename T>
ad::Var<T> mutual_info_term(ad::Var<T> anchor, ad::Var<T> target, const ContrastiveOptions& opts) {
  detail::require_batch(anchor);
  if (anchor.shape() != target.shape()) throw DimensionError("mutual_info_term: rows are not aligned");
  return detail::info_from_similarities(ad::cosine_matrix(anchor, target), ad::cosine_matrix(anchor, anchor), opts);
}

// -(1/4B) sum_i sum_{m in {a, b}} [I(e^m_i, fused_i) + I(fused_i, e^m_i)].
// The five similarity matrices are shared between the four directions.
template <typename T>
ad::Var<T> pair_loss(ad::Var<T> a, ad::Var<T> b, ad::Var<T> fused, const ContrastiveOptions& opts) {
  detail::require_batch(fused);
  if (a.shape() != fused.shape() || b.shape() != fused.shape()) throw DimensionError("pair_loss: rows are not aligned");
  auto s_af = ad::cosine_matrix(a, fused);
  auto s_bf = ad::cosine_matrix(b, fused);
  auto s_aa = ad::cosine_matrix(a, a);
  auto s_bb = ad::cosine_matrix(b, b);
  auto s_ff = ad::cosine_matrix(fused, fused);
  auto total = ad::add(ad::add(detail::info_from_similarities(s_af, s_aa, opts),
                               detail::info_from_similarities(ad::transpose(s_af), s_ff, opts)),
                       ad::add(detail::info_from_similarities(s_bf, s_bb, opts),
                               detail::info_from_similarities(ad::transpose(s_bf), s_ff, opts)));
  return ad::scale(total, static_cast<T>(-0.25));
}

// Sum of pair losses over the triples present in the content state:
// (t, tid, t'), (v, vid, v'), (t', v', c). Returns nullopt if none exist
// (single modality without enhancement).
template <typename T>
std::optional<ad::Var<T>> total_contrastive(const ContentState<T>& st, const ContrastiveOptions& opts) {
  std::optional<ad::Var<T>> total;
  auto accumulate = [&](ad::Var<T> term) { total = total ? ad::add(*total, term) : term; };
  if (st.text && st.text_id) accumulate(pair_loss(*st.text, *st.text_id, *st.text_fused, opts));
  if (st.visual && st.visual_id) accumulate(pair_loss(*st.visual, *st.visual_id, *st.visual_fused, opts));
  if (st.text_fused && st.visual_fused) accumulate(pair_loss(*st.text_fused, *st.visual_fused, st.content, opts));
  return total;
}

}  // namespace idsf
