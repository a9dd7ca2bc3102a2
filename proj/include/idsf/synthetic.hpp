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
#include <iomanip>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "idsf/dataio.hpp"

namespace idsf {

struct SyntheticOptions {
  std::size_t users = 50;
  std::size_t items = 100;
  std::size_t clusters = 5;
  std::uint64_t seed = 7;
  std::size_t text_dim = 32;
  std::size_t visual_dim = 48;
  std::size_t min_interactions = 8;
  std::size_t max_interactions = 16;
  double in_cluster_probability = 0.9;
  double feature_noise = 0.6;
};

struct SyntheticData {
  std::vector<InteractionRecord> records;
  std::vector<std::string> item_ids;  // row order of both feature tables
  std::vector<std::size_t> item_cluster;
  std::vector<std::size_t> user_cluster;
  ModalFeatureTable text;
  ModalFeatureTable visual;
};

namespace detail {
inline std::string padded_id(char prefix, std::size_t k, std::size_t count) {
  std::ostringstream os;
  os << prefix << std::setw(static_cast<int>(std::to_string(count).size())) << std::setfill('0') << k;
  return os.str();
}
}  // namespace detail

// Clustered fixture: item k belongs to cluster k % clusters, user u prefers
// cluster u % clusters, and both feature tables are the cluster centroid plus
// Gaussian noise, so modal content predicts preference. Ids are zero-padded
// so their lexicographic order equals generation order.
inline SyntheticData generate_synthetic(const SyntheticOptions& opts) {
  if (opts.clusters == 0 || opts.clusters > opts.items) throw ConfigError("cluster count must be in [1, items]");
  if (opts.users == 0 || opts.items == 0) throw ConfigError("synthetic dataset needs users and items");
  std::mt19937_64 rng(opts.seed);
  SyntheticData out;
  out.item_cluster.resize(opts.items);
  std::vector<std::vector<std::size_t>> members(opts.clusters);
  for (std::size_t i = 0; i < opts.items; ++i) {
    out.item_cluster[i] = i % opts.clusters;
    members[i % opts.clusters].push_back(i);
    out.item_ids.push_back(detail::padded_id('i', i, opts.items));
  }

  const std::size_t hi = std::min(opts.max_interactions, opts.items);
  const std::size_t lo = std::min(opts.min_interactions, hi);
  std::uniform_int_distribution<std::size_t> count_dist(lo, hi);
  std::uniform_int_distribution<std::size_t> any_item(0, opts.items - 1);
  std::bernoulli_distribution in_cluster(opts.in_cluster_probability);
  for (std::size_t u = 0; u < opts.users; ++u) {
    const std::size_t c = u % opts.clusters;
    out.user_cluster.push_back(c);
    const std::string uid = detail::padded_id('u', u, opts.users);
    const std::size_t target = count_dist(rng);
    std::set<std::size_t> chosen;
    std::uniform_int_distribution<std::size_t> pick(0, members[c].size() - 1);
    for (std::size_t attempt = 0; chosen.size() < target && attempt < 100 * target; ++attempt) {
      chosen.insert(in_cluster(rng) ? members[c][pick(rng)] : any_item(rng));
    }
    for (auto i : chosen) out.records.push_back({uid, out.item_ids[i]});
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  auto make_table = [&](Modality m, std::size_t dim) {
    std::vector<std::vector<double>> centroids(opts.clusters, std::vector<double>(dim));
    for (auto& cvec : centroids)
      for (auto& v : cvec) v = normal(rng);
    ModalFeatureTable t{m, Tensor<float>(opts.items, dim)};
    for (std::size_t i = 0; i < opts.items; ++i)
      for (std::size_t k = 0; k < dim; ++k)
        t.values(i, k) = static_cast<float>(centroids[out.item_cluster[i]][k] + opts.feature_noise * normal(rng));
    return t;
  };
  out.text = make_table(Modality::kText, opts.text_dim);
  out.visual = make_table(Modality::kVisual, opts.visual_dim);
  return out;
}

}  // namespace idsf
