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
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "idsf/error.hpp"
#include "idsf/log.hpp"
#include "idsf/matrix_io.hpp"
#include "idsf/tensor.hpp"

namespace idsf {

struct InteractionRecord {
  std::string user;
  std::string item;

  bool operator==(const InteractionRecord&) const = default;
};

struct Edge {
  std::uint32_t user = 0;
  std::uint32_t item = 0;

  auto operator<=>(const Edge&) const = default;
};

enum class Split { kTrain, kValid, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "?";
}

// Adjacency of one split's edges in both directions, each list sorted.
struct Positives {
  std::vector<std::vector<std::uint32_t>> by_user;
  std::vector<std::vector<std::uint32_t>> by_item;

  bool contains(std::uint32_t user, std::uint32_t item) const {
    const auto& l = by_user[user];
    return std::binary_search(l.begin(), l.end(), item);
  }
};

inline Positives build_positives(std::size_t users, std::size_t items, const std::vector<Edge>& edges) {
  Positives p;
  p.by_user.resize(users);
  p.by_item.resize(items);
  for (const auto& e : edges) {
    p.by_user[e.user].push_back(e.item);
    p.by_item[e.item].push_back(e.user);
  }
  for (auto& l : p.by_user) std::sort(l.begin(), l.end());
  for (auto& l : p.by_item) std::sort(l.begin(), l.end());
  return p;
}

class Dataset {
 public:
  Dataset() = default;

  // Validates indices and split disjointness and precomputes adjacency.
  Dataset(std::vector<std::string> user_ids, std::vector<std::string> item_ids, std::vector<Edge> train,
          std::vector<Edge> valid, std::vector<Edge> test)
      : user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)) {
    edges_[0] = std::move(train);
    edges_[1] = std::move(valid);
    edges_[2] = std::move(test);
    std::set<Edge> seen;
    for (auto& list : edges_) {
      for (const auto& e : list) {
        if (e.user >= user_ids_.size() || e.item >= item_ids_.size()) {
          throw DataError("edge (" + std::to_string(e.user) + "," + std::to_string(e.item) + ") out of range");
        }
        if (!seen.insert(e).second) throw DataError("edge appears twice across splits");
      }
    }
    for (std::size_t s = 0; s < 3; ++s) positives_[s] = build_positives(user_count(), item_count(), edges_[s]);
  }

  std::size_t user_count() const { return user_ids_.size(); }
  std::size_t item_count() const { return item_ids_.size(); }
  const std::vector<std::string>& user_ids() const { return user_ids_; }
  const std::vector<std::string>& item_ids() const { return item_ids_; }

  const std::vector<Edge>& edges(Split s) const { return edges_[static_cast<int>(s)]; }
  const Positives& positives(Split s) const { return positives_[static_cast<int>(s)]; }
  const std::vector<Edge>& train() const { return edges(Split::kTrain); }
  const std::vector<Edge>& valid() const { return edges(Split::kValid); }
  const std::vector<Edge>& test() const { return edges(Split::kTest); }

  std::size_t interaction_count() const { return edges_[0].size() + edges_[1].size() + edges_[2].size(); }

 private:
  std::vector<std::string> user_ids_;
  std::vector<std::string> item_ids_;
  std::vector<Edge> edges_[3];
  Positives positives_[3];
};

// ---------------------------------------------------------------------------
// Interactions

// Reads "user<TAB>item[<TAB>...]" lines. Extra columns are ignored and
// duplicate pairs keep their first occurrence.
inline std::vector<InteractionRecord> load_interactions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<InteractionRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  bool any_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    any_content = true;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path, line_no, "expected user<TAB>item");
    const auto next = line.find('\t', tab + 1);
    std::string user = line.substr(0, tab);
    std::string item = line.substr(tab + 1, next == std::string::npos ? std::string::npos : next - tab - 1);
    if (user.empty() || item.empty()) throw ParseError(path, line_no, "empty user or item id");
    std::string key = user;
    key.push_back('\t');
    key += item;
    if (!seen.insert(std::move(key)).second) continue;
    records.push_back({std::move(user), std::move(item)});
  }
  if (!any_content) throw EmptyInputError(path + ": no interactions");
  return records;
}

inline void write_interactions(const std::string& path, const std::vector<InteractionRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& r : records) out << r.user << '\t' << r.item << '\n';
}

// ---------------------------------------------------------------------------
// Splitting

enum class SplitMode { kPerUser, kGlobal };

struct SplitOptions {
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 2023;
  SplitMode mode = SplitMode::kPerUser;
};

namespace detail {

// Dense ids are assigned in lexicographic order of the raw ids, so the
// result does not depend on record order.
inline std::vector<std::string> sorted_unique(std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

inline std::unordered_map<std::string, std::uint32_t> index_of(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::uint32_t> m;
  m.reserve(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) m.emplace(ids[k], static_cast<std::uint32_t>(k));
  return m;
}

inline std::size_t held_out_count(std::size_t n, double ratio) {
  if (ratio <= 0.0) return 0;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 0.5)));
}

}  // namespace detail

inline void validate_ratios(const std::array<double, 3>& r) {
  for (double v : r) {
    if (!(v >= 0.0)) throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
}

// Per-user mode: each user's items are shuffled and cut into train / valid /
// test with max(1, round(n * ratio)) held-out edges per split; users with
// fewer than 3 interactions keep everything in train. Global mode shuffles
// all edges together and drops users left without a training edge.
inline Dataset split_dataset(const std::vector<InteractionRecord>& records, const SplitOptions& opts) {
  validate_ratios(opts.ratios);
  if (records.empty()) throw EmptyInputError("no interactions to split");
  std::vector<std::string> users, items;
  users.reserve(records.size());
  items.reserve(records.size());
  for (const auto& r : records) {
    users.push_back(r.user);
    items.push_back(r.item);
  }
  users = detail::sorted_unique(std::move(users));
  items = detail::sorted_unique(std::move(items));
  const auto uidx = detail::index_of(users);
  const auto iidx = detail::index_of(items);

  std::vector<std::vector<std::uint32_t>> by_user(users.size());
  for (const auto& r : records) by_user[uidx.at(r.user)].push_back(iidx.at(r.item));
  for (auto& l : by_user) {
    std::sort(l.begin(), l.end());
    l.erase(std::unique(l.begin(), l.end()), l.end());
  }

  std::mt19937_64 rng(opts.seed);
  std::vector<Edge> parts[3];

  if (opts.mode == SplitMode::kPerUser) {
    for (std::uint32_t u = 0; u < by_user.size(); ++u) {
      auto list = by_user[u];
      std::shuffle(list.begin(), list.end(), rng);
      std::size_t n_valid = 0, n_test = 0;
      if (list.size() >= 3) {
        n_valid = detail::held_out_count(list.size(), opts.ratios[1]);
        n_test = detail::held_out_count(list.size(), opts.ratios[2]);
        if (n_valid + n_test >= list.size()) {
          n_valid = std::min<std::size_t>(n_valid, 1);
          n_test = std::min<std::size_t>(n_test, 1);
        }
      }
      const std::size_t n_train = list.size() - n_valid - n_test;
      for (std::size_t k = 0; k < list.size(); ++k) {
        const int part = k < n_train ? 0 : (k < n_train + n_valid ? 1 : 2);
        parts[part].push_back({u, list[k]});
      }
    }
    for (auto& p : parts) std::sort(p.begin(), p.end());
    return Dataset(std::move(users), std::move(items), std::move(parts[0]), std::move(parts[1]), std::move(parts[2]));
  }

  std::vector<Edge> all;
  for (std::uint32_t u = 0; u < by_user.size(); ++u)
    for (auto i : by_user[u]) all.push_back({u, i});
  std::shuffle(all.begin(), all.end(), rng);
  const auto n = all.size();
  const auto n_valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * opts.ratios[1] + 0.5));
  const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * opts.ratios[2] + 0.5));
  const auto n_train = n - std::min(n, n_valid + n_test);
  std::vector<bool> has_train(users.size(), false);
  for (std::size_t k = 0; k < n_train; ++k) has_train[all[k].user] = true;

  std::vector<std::uint32_t> remap(users.size(), UINT32_MAX);
  std::vector<std::string> kept;
  for (std::size_t u = 0; u < users.size(); ++u) {
    if (!has_train[u]) {
      log::warn("dropping user '" + users[u] + "': no training interaction after split");
      continue;
    }
    remap[u] = static_cast<std::uint32_t>(kept.size());
    kept.push_back(users[u]);
  }
  for (std::size_t k = 0; k < n; ++k) {
    const Edge e = all[k];
    if (remap[e.user] == UINT32_MAX) continue;
    const int part = k < n_train ? 0 : (k < n_train + n_valid ? 1 : 2);
    parts[part].push_back({remap[e.user], e.item});
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return Dataset(std::move(kept), std::move(items), std::move(parts[0]), std::move(parts[1]), std::move(parts[2]));
}

// ---------------------------------------------------------------------------
// Split manifest (JSON)

inline nlohmann::json split_manifest_json(const Dataset& ds, const SplitOptions& opts) {
  auto edges = [](const std::vector<Edge>& list) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : list) arr.push_back({e.user, e.item});
    return arr;
  };
  return {
      {"seed", opts.seed},
      {"ratios", opts.ratios},
      {"mode", opts.mode == SplitMode::kPerUser ? "per_user" : "global"},
      {"users", ds.user_ids()},
      {"items", ds.item_ids()},
      {"train", edges(ds.train())},
      {"valid", edges(ds.valid())},
      {"test", edges(ds.test())},
  };
}

inline void write_split_manifest(const std::string& path, const Dataset& ds, const SplitOptions& opts) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << split_manifest_json(ds, opts).dump() << '\n';
}

inline Dataset read_split_manifest(const std::string& path, SplitOptions* opts = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
    auto edges = [&](const char* key) {
      std::vector<Edge> out;
      for (const auto& e : j.at(key)) out.push_back({e.at(0).get<std::uint32_t>(), e.at(1).get<std::uint32_t>()});
      return out;
    };
    if (opts) {
      opts->seed = j.at("seed").get<std::uint64_t>();
      opts->ratios = j.at("ratios").get<std::array<double, 3>>();
      opts->mode = j.at("mode").get<std::string>() == "global" ? SplitMode::kGlobal : SplitMode::kPerUser;
    }
    return Dataset(j.at("users").get<std::vector<std::string>>(), j.at("items").get<std::vector<std::string>>(),
                   edges("train"), edges("valid"), edges("test"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Modal features

enum class Modality { kText, kVisual };

inline const char* modality_tag(Modality m) { return m == Modality::kText ? "t" : "v"; }

// Frozen raw features aligned to dense item indices.
struct ModalFeatureTable {
  Modality modality = Modality::kText;
  Tensor<float> values;  // item_count x raw_dim

  std::size_t raw_dim() const { return values.cols(); }
  std::size_t rows() const { return values.rows(); }
};

// Reorders rows keyed by `ids` into the catalog order of `item_ids`.
// Catalog items without a row get zeros. Ids outside the catalog raise
// MappingError unless `skip_unknown` is set.
inline ModalFeatureTable align_features(const Tensor<float>& raw, const std::vector<std::string>& ids,
                                        const std::vector<std::string>& item_ids, Modality modality,
                                        const std::string& source, bool skip_unknown = false) {
  if (ids.size() != raw.rows()) {
    throw FormatError(source + ": " + std::to_string(ids.size()) + " ids for " + std::to_string(raw.rows()) + " rows");
  }
  const auto index = detail::index_of(item_ids);
  ModalFeatureTable table{modality, Tensor<float>(item_ids.size(), raw.cols())};
  std::vector<bool> filled(item_ids.size(), false);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    auto it = index.find(ids[r]);
    if (it == index.end()) {
      if (skip_unknown) continue;
      throw MappingError(source + ":" + std::to_string(r + 1) + ": unknown item '" + ids[r] + "'");
    }
    std::copy_n(raw.data() + r * raw.cols(), raw.cols(), table.values.data() + it->second * raw.cols());
    filled[it->second] = true;
  }
  const auto missing = static_cast<std::size_t>(std::count(filled.begin(), filled.end(), false));
  if (missing > 0) {
    log::warn(std::to_string(missing) + " items have no " + (modality == Modality::kText ? "text" : "visual") +
              " features in '" + source + "'; using zero rows");
  }
  return table;
}

// Loads a matrix file and its id sidecar, reordering rows to the dataset's
// item order. Catalog items absent from the file get zero rows.
inline ModalFeatureTable load_features(const std::string& matrix_path, const std::string& sidecar_path,
                                       const std::vector<std::string>& item_ids, Modality modality) {
  Tensor<float> raw = io::read_matrix(matrix_path);
  if (!raw.all_finite()) throw FormatError(matrix_path + ": non-finite feature values");
  const auto ids = io::read_lines(sidecar_path);
  if (ids.size() != raw.rows()) {
    throw FormatError(sidecar_path + ": " + std::to_string(ids.size()) + " ids for " + std::to_string(raw.rows()) +
                      " rows");
  }
  return align_features(raw, ids, item_ids, modality, matrix_path);
}

inline void save_features(const std::string& matrix_path, const std::string& sidecar_path,
                          const ModalFeatureTable& table, const std::vector<std::string>& item_ids) {
  if (item_ids.size() != table.rows()) throw ContractError("sidecar ids do not match feature rows");
  io::write_matrix(matrix_path, table.values);
  io::write_lines(sidecar_path, item_ids);
}

}  // namespace idsf
