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
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "idsf/dataio.hpp"
#include "idsf/model.hpp"

namespace idsf {

// Items ordered by descending score, ties by ascending index. Masked items
// are excluded. At most `limit` items are returned.
template <typename T>
std::vector<std::uint32_t> rank_items(std::span<const T> scores, std::span<const std::uint32_t> masked = {},
                                      std::size_t limit = std::numeric_limits<std::size_t>::max()) {
  std::vector<char> skip(scores.size(), 0);
  for (auto i : masked) {
    if (i < skip.size()) skip[i] = 1;
  }
  std::vector<std::uint32_t> order;
  order.reserve(scores.size());
  for (std::uint32_t i = 0; i < scores.size(); ++i) {
    if (!skip[i]) order.push_back(i);
  }
  auto before = [&](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  const std::size_t k = std::min(limit, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  order.resize(k);
  return order;
}

struct RankMetrics {
  double recall = 0.0;
  double precision = 0.0;
  double ndcg = 0.0;

  bool operator==(const RankMetrics&) const = default;
};

// `positives` must be sorted. Returns nullopt when there are none.
inline std::optional<RankMetrics> metrics_at_k(std::span<const std::uint32_t> ranked,
                                               std::span<const std::uint32_t> positives, std::size_t k) {
  if (k == 0) throw ContractError("metrics_at_k: K must be >= 1");
  if (positives.empty()) return std::nullopt;
  double dcg = 0.0;
  std::size_t hits = 0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t r = 0; r < n; ++r) {
    if (std::binary_search(positives.begin(), positives.end(), ranked[r])) {
      ++hits;
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  const std::size_t ideal = std::min(k, positives.size());
  for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  RankMetrics m;
  m.recall = static_cast<double>(hits) / static_cast<double>(positives.size());
  m.precision = static_cast<double>(hits) / static_cast<double>(k);
  m.ndcg = dcg / idcg;
  return m;
}

struct EvalOptions {
  std::vector<std::size_t> ks{10, 20};
  std::size_t threads = 1;
};

struct EvalReport {
  std::string split;
  std::vector<std::size_t> ks;
  std::map<std::size_t, RankMetrics> at;  // means over evaluated users
  std::size_t evaluated_users = 0;
  double wall_seconds = 0.0;
  nlohmann::json config;  // echo, may be null

  double recall(std::size_t k) const { return at.at(k).recall; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["split"] = split;
    j["evaluated_users"] = evaluated_users;
    j["wall_seconds"] = wall_seconds;
    nlohmann::json metrics = nlohmann::json::object();
    for (auto k : ks) {
      const auto& m = at.at(k);
      metrics[std::to_string(k)] = {{"recall", m.recall}, {"precision", m.precision}, {"ndcg", m.ndcg}};
    }
    j["metrics"] = metrics;
    j["protocol"] = {{"candidates", "full_catalog"},
                     {"masked", split == "test" ? nlohmann::json{"train", "valid"} : nlohmann::json{"train"}},
                     {"ties", "ascending_item_index"},
                     {"idcg", "truncated_at_min_k_positives"}};
    if (!config.is_null()) j["config"] = config;
    return j;
  }

  // One metric per row, values x100.
  std::string table() const {
    std::string out = "Metric(x100%)  " + split + "\n";
    char line[64];
    for (auto k : ks) {
      const auto& m = at.at(k);
      const std::pair<const char*, double> rows[] = {{"Recall", m.recall}, {"Precision", m.precision}, {"NDCG", m.ndcg}};
      for (const auto& [name, value] : rows) {
        std::snprintf(line, sizeof line, "%-14s %8.3f\n", (std::string(name) + "@" + std::to_string(k)).c_str(),
                      100.0 * value);
        out += line;
      }
    }
    return out;
  }
};

namespace detail {

// Row-wise dot products of one user vector against every item; each score is
// accumulated over k in order, matching predict().
template <typename T>
void score_all_items(std::span<const T> user, const std::vector<T>& items_by_dim, std::size_t item_count,
                     std::vector<T>& out) {
  constexpr std::size_t kLanes = 16;
  out.assign(item_count, T(0));
  const std::size_t d = user.size();
  for (std::size_t i0 = 0; i0 < item_count; i0 += kLanes) {
    const std::size_t n = std::min(kLanes, item_count - i0);
    T acc[kLanes] = {};
    for (std::size_t k = 0; k < d; ++k) {
      const T uk = user[k];
      const T* col = items_by_dim.data() + k * item_count + i0;
      for (std::size_t j = 0; j < n; ++j) acc[j] += uk * col[j];
    }
    std::copy(acc, acc + n, out.begin() + static_cast<std::ptrdiff_t>(i0));
  }
}

}  // namespace detail

// Full-catalog evaluation from precomputed final embeddings.
template <typename T>
EvalReport evaluate_embeddings(const Tensor<T>& users, const Tensor<T>& items, const Dataset& ds, Split split,
                               const EvalOptions& opts = {}) {
  if (split == Split::kTrain) throw ContractError("evaluation split must be valid or test");
  if (opts.ks.empty()) throw ContractError("no cutoffs requested");
  if (users.rows() != ds.user_count() || items.rows() != ds.item_count() || users.cols() != items.cols()) {
    throw DimensionError("embedding tables do not match the dataset");
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n_items = items.rows(), d = items.cols();
  std::vector<T> by_dim(d * n_items);
  for (std::size_t i = 0; i < n_items; ++i)
    for (std::size_t k = 0; k < d; ++k) by_dim[k * n_items + i] = items(i, k);

  const auto& target = ds.positives(split);
  const auto& train = ds.positives(Split::kTrain);
  const auto& valid = ds.positives(Split::kValid);
  const std::size_t max_k = *std::max_element(opts.ks.begin(), opts.ks.end());
  const std::size_t n_users = users.rows();

  std::vector<std::optional<std::vector<RankMetrics>>> per_user(n_users);
  auto work = [&](std::size_t begin, std::size_t stride) {
    std::vector<T> scores;
    std::vector<std::uint32_t> masked;
    for (std::size_t u = begin; u < n_users; u += stride) {
      const auto& pos = target.by_user[u];
      if (pos.empty()) continue;
      detail::score_all_items<T>(users.row_span(u), by_dim, n_items, scores);
      masked = train.by_user[u];
      if (split == Split::kTest) masked.insert(masked.end(), valid.by_user[u].begin(), valid.by_user[u].end());
      const auto ranked = rank_items<T>(scores, masked, max_k);
      std::vector<RankMetrics> row;
      for (auto k : opts.ks) row.push_back(*metrics_at_k(ranked, pos, k));
      per_user[u] = std::move(row);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, n_users));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& th : pool) th.join();
  }

  EvalReport report;
  report.split = split_name(split);
  report.ks = opts.ks;
  std::vector<RankMetrics> sums(opts.ks.size());
  for (const auto& row : per_user) {
    if (!row) continue;
    ++report.evaluated_users;
    for (std::size_t j = 0; j < row->size(); ++j) {
      sums[j].recall += (*row)[j].recall;
      sums[j].precision += (*row)[j].precision;
      sums[j].ndcg += (*row)[j].ndcg;
    }
  }
  const double denom = report.evaluated_users ? static_cast<double>(report.evaluated_users) : 1.0;
  for (std::size_t j = 0; j < opts.ks.size(); ++j) {
    report.at[opts.ks[j]] = {sums[j].recall / denom, sums[j].precision / denom, sums[j].ndcg / denom};
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

template <typename T>
EvalReport evaluate(const IdsfModel<T>& model, const Dataset& ds, Split split, const EvalOptions& opts = {}) {
  const auto e = model.embeddings();
  return evaluate_embeddings(e.users, e.items, ds, split, opts);
}

}  // namespace idsf
