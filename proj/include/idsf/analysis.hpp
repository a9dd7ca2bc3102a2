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
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "idsf/dataio.hpp"
#include "idsf/matrix_io.hpp"
#include "idsf/model.hpp"

namespace idsf {

// Items of several users laid out in adjacent per-user blocks.
struct UserItemSample {
  std::vector<std::uint32_t> users;
  std::vector<std::uint32_t> items;
  std::vector<std::size_t> groups;  // block index per item
};

// Draws `user_count` users with training items and no item shared between
// them. Overlapping draws are rejected; gives up after `max_draws`.
inline UserItemSample sample_user_items(const Dataset& ds, std::size_t user_count, std::mt19937_64& rng,
                                        std::size_t max_draws = 10000) {
  if (user_count == 0) throw ContractError("sample needs at least one user");
  const auto& pos = ds.positives(Split::kTrain);
  std::vector<std::uint32_t> candidates;
  for (std::uint32_t u = 0; u < ds.user_count(); ++u) {
    if (!pos.by_user[u].empty()) candidates.push_back(u);
  }
  if (candidates.size() < user_count) {
    throw SamplingError("only " + std::to_string(candidates.size()) + " users have training items");
  }
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  UserItemSample out;
  std::set<std::uint32_t> taken_users, taken_items;
  for (std::size_t draw = 0; draw < max_draws && out.users.size() < user_count; ++draw) {
    const std::uint32_t u = candidates[pick(rng)];
    if (taken_users.count(u)) continue;
    const auto& items = pos.by_user[u];
    if (std::any_of(items.begin(), items.end(), [&](std::uint32_t i) { return taken_items.count(i) > 0; })) continue;
    taken_users.insert(u);
    taken_items.insert(items.begin(), items.end());
    for (auto i : items) {
      out.items.push_back(i);
      out.groups.push_back(out.users.size());
    }
    out.users.push_back(u);
  }
  if (out.users.size() < user_count) {
    throw SamplingError("could not find " + std::to_string(user_count) + " users with disjoint items after " +
                        std::to_string(max_draws) + " draws");
  }
  return out;
}

struct SimilarityMatrix {
  Tensor<double> values;                // n x n
  std::vector<std::size_t> zero_rows;  // rows whose input vector was zero
};

// Pairwise cosine similarity, one evaluation per unordered pair.
template <typename T>
SimilarityMatrix similarity_matrix(const Tensor<T>& rows) {
  const std::size_t n = rows.rows(), d = rows.cols();
  std::vector<double> norms(n, 0.0);
  SimilarityMatrix m{Tensor<double>(n, n), {}};
  for (std::size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += static_cast<double>(rows(r, k)) * static_cast<double>(rows(r, k));
    norms[r] = std::sqrt(s);
    if (norms[r] == 0.0) m.zero_rows.push_back(r);
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) {
      double v = 0.0;
      if (norms[a] > 0.0 && norms[b] > 0.0) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(rows(a, k)) * static_cast<double>(rows(b, k));
        v = std::clamp(dot / (norms[a] * norms[b]), -1.0, 1.0);
      }
      m.values(a, b) = v;
      m.values(b, a) = v;
    }
  }
  return m;
}

// Keeps the k largest entries of each row (ties keep lower column indices)
// and zeroes the rest.
inline SimilarityMatrix top_k_row_filter(const SimilarityMatrix& in, std::size_t k) {
  if (k == 0) throw ContractError("top_k_row_filter: k must be >= 1");
  SimilarityMatrix out = in;
  const std::size_t n = in.values.cols();
  if (k >= n) return out;
  std::vector<std::size_t> order(n);
  for (std::size_t r = 0; r < in.values.rows(); ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return in.values(r, a) > in.values(r, b); });
    for (std::size_t j = k; j < n; ++j) out.values(r, order[j]) = 0.0;
  }
  return out;
}

// Mean off-diagonal similarity within groups and across groups.
inline std::pair<double, double> group_similarity_means(const SimilarityMatrix& m,
                                                        const std::vector<std::size_t>& groups) {
  double within = 0.0, cross = 0.0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t a = 0; a < groups.size(); ++a) {
    for (std::size_t b = 0; b < groups.size(); ++b) {
      if (a == b) continue;
      if (groups[a] == groups[b]) {
        within += m.values(a, b);
        ++nw;
      } else {
        cross += m.values(a, b);
        ++nc;
      }
    }
  }
  return {nw ? within / static_cast<double>(nw) : 0.0, nc ? cross / static_cast<double>(nc) : 0.0};
}

inline void write_similarity_csv(const std::string& path, const SimilarityMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  char buf[32];
  for (std::size_t r = 0; r < m.values.rows(); ++r) {
    for (std::size_t c = 0; c < m.values.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", m.values(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

inline const std::vector<std::string>& export_selectors() {
  static const std::vector<std::string> names{"item-id-t",   "item-id-v", "user-id",     "projected-t",
                                              "projected-v", "fused-c",   "structural-s"};
  return names;
}

struct ExportedTable {
  Tensor<float> values;
  bool per_user = false;  // rows are users rather than items
};

// Pulls one representation table out of a model. `structural-s` is the item
// side; `user-id` is the shared user table.
template <typename T>
ExportedTable export_embeddings(const IdsfModel<T>& model, const std::string& which) {
  const auto& known = export_selectors();
  if (std::find(known.begin(), known.end(), which) == known.end()) {
    throw ConfigError("unknown export selector '" + which + "'");
  }
  auto table = [&](const std::string& name) {
    if (!model.params().contains(name)) {
      throw ConfigError("selector '" + which + "' is unavailable: the model has no '" + name + "' table");
    }
    return model.params().at(name).template cast<float>();
  };
  if (which == "item-id-t") return {table("item_id_t")};
  if (which == "item-id-v") return {table("item_id_v")};
  if (which == "user-id") return {table("user_id"), true};
  ad::Tape<T> tape(false);
  auto f = model.forward_structure(tape);
  if (which == "projected-t" || which == "projected-v") {
    const auto& p = which == "projected-t" ? f.projected_text : f.projected_visual;
    if (!p) throw ConfigError("selector '" + which + "' is unavailable: modality disabled");
    return {p->value().template cast<float>()};
  }
  if (which == "structural-s") return {f.item_structure.value().template cast<float>()};
  const auto e = model.embeddings();
  if (e.item_content.size() == 0) throw ConfigError("selector 'fused-c' is unavailable under no_content");
  return {e.item_content.template cast<float>()};
}

// Writes <stem>.idsf, <stem>.ids and <stem>.labels (one group per row).
inline void write_export(const std::string& stem, const Tensor<float>& values, const std::vector<std::string>& ids,
                         const std::vector<long long>& labels) {
  if (ids.size() != values.rows() || labels.size() != values.rows()) {
    throw ContractError("export ids/labels do not match rows");
  }
  io::write_matrix(stem + ".idsf", values);
  io::write_lines(stem + ".ids", ids);
  std::vector<std::string> lines;
  lines.reserve(labels.size());
  for (auto l : labels) lines.push_back(std::to_string(l));
  io::write_lines(stem + ".labels", lines);
}

}  // namespace idsf
