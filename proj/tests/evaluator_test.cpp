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

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "idsf/evaluator.hpp"
#include "idsf/synthetic.hpp"
#include "oracles.hpp"

using namespace idsf;
using idsf::testing::random_tensor;

namespace {

std::vector<std::string> ids(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Random three-way split over a dense random interaction set.
Dataset random_dataset(std::size_t users, std::size_t items, std::mt19937_64& rng) {
  std::vector<Edge> train, valid, test;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (std::uint32_t u = 0; u < users; ++u) {
    for (std::uint32_t i = 0; i < items; ++i) {
      const double c = coin(rng);
      if (c < 0.08) train.push_back({u, i});
      else if (c < 0.10) valid.push_back({u, i});
      else if (c < 0.13) test.push_back({u, i});
    }
  }
  return Dataset(ids("u", users), ids("i", items), train, valid, test);
}

// Coarse integer embeddings give many exact ties.
Tensor<double> integer_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(-1, 1);
  Tensor<double> t(rows, cols);
  for (auto& v : t.values()) v = pick(rng);
  return t;
}

void expect_matches_oracle(const Tensor<double>& users, const Tensor<double>& items, const Dataset& ds, Split split,
                           std::size_t threads) {
  EvalOptions opts;
  opts.threads = threads;
  const auto report = evaluate_embeddings(users, items, ds, split, opts);
  std::size_t evaluated = 0;
  const auto oracle = idsf::testing::brute_force_metrics(users, items, ds, split, opts.ks, &evaluated);
  EXPECT_EQ(report.evaluated_users, evaluated);
  for (std::size_t j = 0; j < opts.ks.size(); ++j) {
    const auto& m = report.at.at(opts.ks[j]);
    EXPECT_EQ(m.recall, oracle[j].recall);
    EXPECT_EQ(m.precision, oracle[j].precision);
    EXPECT_EQ(m.ndcg, oracle[j].ndcg);
  }
}

}  // namespace

TEST(RankItems, OrdersByDescendingScore) {
  const std::vector<double> s{0.1, 0.9, 0.5};
  EXPECT_EQ(rank_items<double>(s), (std::vector<std::uint32_t>{1, 2, 0}));
}

TEST(RankItems, TiesBreakByAscendingIndex) {
  const std::vector<double> s(6, 0.25);
  EXPECT_EQ(rank_items<double>(s), (std::vector<std::uint32_t>{0, 1, 2, 3, 4, 5}));
  const std::vector<float> mixed{1.0f, 2.0f, 1.0f, 2.0f};
  EXPECT_EQ(rank_items<float>(mixed), (std::vector<std::uint32_t>{1, 3, 0, 2}));
}

TEST(RankItems, MaskedItemsNeverAppear) {
  const std::vector<double> s{5.0, 4.0, 3.0, 2.0, 1.0};
  const std::vector<std::uint32_t> masked{0, 2};
  for (std::size_t k = 1; k < 5; ++k) {
    for (auto i : rank_items<double>(s, masked, k)) {
      EXPECT_NE(i, 0u);
      EXPECT_NE(i, 2u);
    }
  }
  EXPECT_EQ(rank_items<double>(s, masked, 2), (std::vector<std::uint32_t>{1, 3}));
}

TEST(MetricsAtK, SinglePositiveFirst) {
  const std::vector<std::uint32_t> ranked{7, 1, 2, 3, 4, 5, 6, 8, 9, 10}, pos{7};
  const auto m = *metrics_at_k(ranked, pos, 10);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 0.1);
  EXPECT_DOUBLE_EQ(m.ndcg, 1.0);
}

TEST(MetricsAtK, SinglePositiveSecond) {
  const std::vector<std::uint32_t> ranked{1, 7, 2}, pos{7};
  EXPECT_NEAR(metrics_at_k(ranked, pos, 10)->ndcg, 0.63093, 1e-5);
}

TEST(MetricsAtK, TwoPositivesOneHitAtTop) {
  const std::vector<std::uint32_t> ranked{3, 0, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11}, pos{3, 11};
  const auto m = *metrics_at_k(ranked, pos, 10);
  EXPECT_DOUBLE_EQ(m.recall, 0.5);
  EXPECT_DOUBLE_EQ(m.precision, 0.1);
  EXPECT_NEAR(m.ndcg, 0.61315, 1e-5);
}

TEST(MetricsAtK, EmptyPositivesAreExcluded) {
  const std::vector<std::uint32_t> ranked{0, 1};
  EXPECT_FALSE(metrics_at_k(ranked, {}, 10));
  EXPECT_THROW(metrics_at_k(ranked, ranked, 0), ContractError);
}

TEST(MetricsAtK, NdcgIsOneExactlyForContiguousTopHits) {
  const std::vector<std::uint32_t> pos{2, 5, 9};
  EXPECT_DOUBLE_EQ(metrics_at_k(std::vector<std::uint32_t>{9, 2, 5, 0, 1}, pos, 5)->ndcg, 1.0);
  EXPECT_LT(metrics_at_k(std::vector<std::uint32_t>{9, 0, 2, 5, 1}, pos, 5)->ndcg, 1.0);
  EXPECT_DOUBLE_EQ(metrics_at_k(std::vector<std::uint32_t>{9, 2, 5, 0}, pos, 2)->ndcg, 1.0);
}

TEST(MetricsAtK, AddingAHitNeverLowersAnyMetric) {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint32_t> ranked(30);
    std::iota(ranked.begin(), ranked.end(), 0u);
    std::shuffle(ranked.begin(), ranked.end(), rng);
    std::vector<std::uint32_t> pos{ranked[25], ranked[3]};
    std::sort(pos.begin(), pos.end());
    const auto before = *metrics_at_k(ranked, pos, 10);
    std::swap(ranked[7], ranked[25]);
    const auto after = *metrics_at_k(ranked, pos, 10);
    EXPECT_GE(after.recall, before.recall);
    EXPECT_GE(after.precision, before.precision);
    EXPECT_GE(after.ndcg, before.ndcg);
    for (double v : {after.recall, after.precision, after.ndcg}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Evaluate, PerfectModelOnSinglePositive) {
  Dataset ds({"u"}, {"a", "b", "c"}, {{0, 0}}, {}, {{0, 2}});
  const Tensor<double> users = Tensor<double>::row({1.0});
  const Tensor<double> items({3, 1}, {5.0, 0.0, 1.0});
  const auto r = evaluate_embeddings(users, items, ds, Split::kTest);
  EXPECT_EQ(r.evaluated_users, 1u);
  EXPECT_DOUBLE_EQ(r.recall(20), 1.0);
  EXPECT_DOUBLE_EQ(r.at.at(10).ndcg, 1.0);
  EXPECT_DOUBLE_EQ(r.at.at(10).precision, 0.1);
  EXPECT_DOUBLE_EQ(r.at.at(20).precision, 0.05);
}

TEST(Evaluate, TestSplitMasksValidationPositives) {
  Dataset ds({"u"}, {"a", "b", "c"}, {{0, 0}}, {{0, 1}}, {{0, 2}});
  const Tensor<double> users = Tensor<double>::row({1.0});
  const Tensor<double> items({3, 1}, {3.0, 2.0, 1.0});
  EXPECT_DOUBLE_EQ(evaluate_embeddings(users, items, ds, Split::kTest).at.at(10).ndcg, 1.0);
  EXPECT_DOUBLE_EQ(evaluate_embeddings(users, items, ds, Split::kValid).at.at(10).ndcg, 1.0);
}

TEST(Evaluate, MatchesBruteForceOracleWithRealValuedScores) {
  std::mt19937_64 rng(52);
  const auto ds = random_dataset(50, 100, rng);
  const auto users = random_tensor(50, 8, rng), items = random_tensor(100, 8, rng);
  for (auto split : {Split::kValid, Split::kTest})
    for (std::size_t threads : {1u, 4u}) expect_matches_oracle(users, items, ds, split, threads);
}

TEST(Evaluate, MatchesBruteForceOracleWithHeavyTies) {
  std::mt19937_64 rng(53);
  const auto ds = random_dataset(50, 100, rng);
  const auto users = integer_tensor(50, 2, rng), items = integer_tensor(100, 2, rng);
  for (auto split : {Split::kValid, Split::kTest}) expect_matches_oracle(users, items, ds, split, 3);
}

TEST(Evaluate, UntrainedModelIsNearRandomBaseline) {
  SyntheticOptions so;
  so.users = 200;
  so.items = 400;
  so.clusters = 1;
  so.feature_noise = 1.0;
  auto data = generate_synthetic(so);
  auto ds = split_dataset(data.records, {});
  auto graph = std::make_shared<BipartiteGraph>(BipartiteGraph::from_training(ds));
  ModelConfig cfg;
  cfg.dim = 16;
  auto text = std::make_shared<Tensor<float>>(
      align_features(data.text.values, data.item_ids, ds.item_ids(), Modality::kText, "synthetic", true).values);
  auto visual = std::make_shared<Tensor<float>>(
      align_features(data.visual.values, data.item_ids, ds.item_ids(), Modality::kVisual, "synthetic", true).values);
  IdsfModel<float> model(cfg, graph, {text, visual});
  const auto report = evaluate(model, ds, Split::kTest);
  ASSERT_GT(report.evaluated_users, 0u);
  // Each test positive lands in a random top-20 with probability about
  // 20 / (candidates); allow three standard deviations.
  double expect = 0.0, var = 0.0;
  for (std::size_t u = 0; u < ds.user_count(); ++u) {
    if (ds.positives(Split::kTest).by_user[u].empty()) continue;
    const double cand = static_cast<double>(ds.item_count() - ds.positives(Split::kTrain).by_user[u].size() -
                                            ds.positives(Split::kValid).by_user[u].size());
    const double p = 20.0 / cand;
    expect += p;
    var += p * (1 - p) / static_cast<double>(ds.positives(Split::kTest).by_user[u].size());
  }
  const double n = static_cast<double>(report.evaluated_users);
  expect /= n;
  const double sigma = std::sqrt(var) / n;
  EXPECT_NEAR(report.recall(20), expect, 3.0 * sigma + 1e-9);
}

TEST(Evaluate, ReportFormats) {
  Dataset ds({"u"}, {"a", "b"}, {{0, 0}}, {}, {{0, 1}});
  const auto r = evaluate_embeddings(Tensor<double>::row({1.0}), Tensor<double>({2, 1}, {1.0, 2.0}), ds, Split::kTest);
  const auto j = r.to_json();
  EXPECT_EQ(j["split"], "test");
  EXPECT_DOUBLE_EQ(j["metrics"]["20"]["recall"].get<double>(), 1.0);
  EXPECT_NE(r.table().find("Recall@20"), std::string::npos);
  EXPECT_NE(r.table().find("100.000"), std::string::npos);
  EXPECT_THROW(evaluate_embeddings(Tensor<double>::row({1.0}), Tensor<double>(3, 1), ds, Split::kTest), DimensionError);
}
