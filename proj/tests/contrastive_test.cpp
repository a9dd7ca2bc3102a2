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
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "idsf/contrastive.hpp"
#include "oracles.hpp"

namespace ad = idsf::ad;
using idsf::ContrastiveOptions;
using idsf::Tensor;
using idsf::TemperatureMode;
using idsf::testing::random_tensor;

namespace {

Tensor<double> permute_rows(const Tensor<double>& t, const std::vector<std::size_t>& perm) {
  Tensor<double> out(t.rows(), t.cols());
  for (std::size_t r = 0; r < perm.size(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) out(r, c) = t(perm[r], c);
  return out;
}

double pair_value(const Tensor<double>& a, const Tensor<double>& b, const Tensor<double>& f,
                  const ContrastiveOptions& opts = {}) {
  ad::Tape<double> tape(false);
  return idsf::pair_loss(tape.constant(a), tape.constant(b), tape.constant(f), opts).value().item();
}

// Direct transcription of the per-item mutual information with cosine
// similarity and exp(f / tau).
double reference_info(const Tensor<double>& anchor, const Tensor<double>& target, double tau) {
  auto cosine = [](std::span<const double> x, std::span<const double> y) {
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      xy += x[k] * y[k];
      xx += x[k] * x[k];
      yy += y[k] * y[k];
    }
    return xy / std::sqrt(xx * yy);
  };
  double total = 0.0;
  const std::size_t n = anchor.rows();
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = std::exp(cosine(anchor.row_span(i), target.row_span(i)) / tau);
    double neg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      neg += std::exp(cosine(anchor.row_span(i), target.row_span(j)) / tau);
      neg += std::exp(cosine(anchor.row_span(i), anchor.row_span(j)) / tau);
    }
    total += std::log(pos / (pos + neg));
  }
  return total / static_cast<double>(n);
}

}  // namespace

TEST(MutualInfo, IdenticalUnitRowsGiveLogOneThird) {
  const Tensor<double> rows({2, 3}, {0.6, 0.8, 0.0, 0.6, 0.8, 0.0});
  for (double tau : {0.2, 0.5, 1.0}) {
    ad::Tape<double> tape;
    auto term = idsf::mutual_info_term(tape.constant(rows), tape.constant(rows), ContrastiveOptions{tau});
    EXPECT_NEAR(term.value().item(), std::log(1.0 / 3.0), 1e-12);
  }
}

TEST(MutualInfo, SharpTemperatureWithOrthogonalNegativesApproachesZeroFromBelow) {
  const Tensor<double> rows({2, 2}, {1.0, 0.0, 0.0, 1.0});
  ad::Tape<double> tape;
  const double v = idsf::mutual_info_term(tape.constant(rows), tape.constant(rows), ContrastiveOptions{0.05})
                       .value()
                       .item();
  EXPECT_LT(v, 0.0);
  EXPECT_GT(v, -1e-8);
}

TEST(MutualInfo, MatchesReferenceTranscription) {
  std::mt19937_64 rng(21);
  const auto a = random_tensor(7, 5, rng);
  const auto t = random_tensor(7, 5, rng);
  ad::Tape<double> tape;
  const double v = idsf::mutual_info_term(tape.constant(a), tape.constant(t), ContrastiveOptions{0.5}).value().item();
  EXPECT_NEAR(v, reference_info(a, t, 0.5), 1e-12);
}

TEST(MutualInfo, BatchOfOneIsContractError) {
  ad::Tape<double> tape;
  auto row = tape.constant(Tensor<double>::row({1.0, 2.0}));
  EXPECT_THROW(idsf::mutual_info_term(row, row, {}), idsf::ContractError);
}

TEST(MutualInfo, MisalignedRowsThrow) {
  ad::Tape<double> tape;
  EXPECT_THROW(idsf::mutual_info_term(tape.constant(Tensor<double>(3, 2, 1.0)), tape.constant(Tensor<double>(2, 2, 1.0)), {}),
               idsf::DimensionError);
}

TEST(PairLoss, IdenticalRowsGiveMinusLogOneThird) {
  const Tensor<double> rows({2, 2}, {1.0, 0.0, 1.0, 0.0});
  EXPECT_NEAR(pair_value(rows, rows, rows), -std::log(1.0 / 3.0), 1e-12);
  EXPECT_NEAR(pair_value(rows, rows, rows), 1.0986, 1e-4);
}

TEST(PairLoss, NonNegativeOnRandomInputs) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 9;
    EXPECT_GE(pair_value(random_tensor(n, 4, rng), random_tensor(n, 4, rng), random_tensor(n, 4, rng)), 0.0);
  }
}

TEST(PairLoss, InvariantToPositiveRowRescaling) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> factor(0.1, 10.0);
  const auto a = random_tensor(6, 4, rng), b = random_tensor(6, 4, rng), f = random_tensor(6, 4, rng);
  auto rescale = [&](Tensor<double> t) {
    for (std::size_t r = 0; r < t.rows(); ++r) {
      const double s = factor(rng);
      for (auto& v : t.row_span(r)) v *= s;
    }
    return t;
  };
  EXPECT_NEAR(pair_value(a, b, f), pair_value(rescale(a), rescale(b), rescale(f)), 1e-6);
}

TEST(PairLoss, DoublingEveryRowLeavesLossUnchanged) {
  std::mt19937_64 rng(24);
  const auto a = random_tensor(4, 3, rng), b = random_tensor(4, 3, rng), f = random_tensor(4, 3, rng);
  auto twice = [](Tensor<double> t) {
    for (auto& v : t.values()) v *= 2.0;
    return t;
  };
  EXPECT_NEAR(pair_value(a, b, f), pair_value(twice(a), twice(b), twice(f)), 1e-12);
}

TEST(PairLoss, InvariantToBatchPermutation) {
  std::mt19937_64 rng(25);
  const auto a = random_tensor(8, 5, rng), b = random_tensor(8, 5, rng), f = random_tensor(8, 5, rng);
  std::vector<std::size_t> perm{3, 7, 0, 5, 1, 6, 2, 4};
  EXPECT_NEAR(pair_value(a, b, f), pair_value(permute_rows(a, perm), permute_rows(b, perm), permute_rows(f, perm)),
              1e-12);
}

TEST(PairLoss, DecreasesAsFusedRowsTurnTowardTheirAnchors) {
  // Anchors e1, e2; fused rows swing from e3, e4 onto them.
  const Tensor<double> anchors({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
  double previous = std::numeric_limits<double>::infinity();
  for (int step = 0; step <= 20; ++step) {
    const double theta = 0.5 * std::numbers::pi * step / 20.0;
    const double c = std::cos(theta), s = std::sin(theta);
    const Tensor<double> fused({2, 4}, {s, 0, c, 0, 0, s, 0, c});
    const double v = pair_value(anchors, anchors, fused);
    EXPECT_LT(v, previous) << "step " << step;
    previous = v;
  }
}

TEST(PairLoss, LiteralTemperatureCancels) {
  std::mt19937_64 rng(26);
  const auto a = random_tensor(5, 3, rng), b = random_tensor(5, 3, rng), f = random_tensor(5, 3, rng);
  const double v1 = pair_value(a, b, f, {0.1, TemperatureMode::kLiteral});
  const double v2 = pair_value(a, b, f, {2.0, TemperatureMode::kLiteral});
  EXPECT_NEAR(v1, v2, 1e-12);
  EXPECT_NE(pair_value(a, b, f, {0.1}), pair_value(a, b, f, {2.0}));
}

TEST(TotalContrastive, TextOnlyStateUsesSingleTerm) {
  std::mt19937_64 rng(27);
  const auto t = random_tensor(4, 3, rng), tid = random_tensor(4, 3, rng), tf = random_tensor(4, 3, rng);
  ad::Tape<double> tape;
  idsf::ContentState<double> st;
  st.text = tape.constant(t);
  st.text_id = tape.constant(tid);
  st.text_fused = tape.constant(tf);
  st.content = *st.text_fused;
  auto total = idsf::total_contrastive(st, {});
  ASSERT_TRUE(total);
  EXPECT_DOUBLE_EQ(total->value().item(), pair_value(t, tid, tf));
}

TEST(TotalContrastive, SingleOriginalModalityHasNoTerm) {
  ad::Tape<double> tape;
  idsf::ContentState<double> st;
  st.text = tape.constant(Tensor<double>(3, 2, 1.0));
  st.text_fused = st.text;
  st.content = *st.text;
  EXPECT_FALSE(idsf::total_contrastive(st, {}));
}

TEST(TotalContrastive, SumsThreeTermsAndIsNonNegative) {
  std::mt19937_64 rng(28);
  std::vector<Tensor<double>> r;
  for (int k = 0; k < 7; ++k) r.push_back(random_tensor(5, 4, rng));
  ad::Tape<double> tape;
  idsf::ContentState<double> st;
  st.text = tape.constant(r[0]);
  st.text_id = tape.constant(r[1]);
  st.text_fused = tape.constant(r[2]);
  st.visual = tape.constant(r[3]);
  st.visual_id = tape.constant(r[4]);
  st.visual_fused = tape.constant(r[5]);
  st.content = tape.constant(r[6]);
  const double total = idsf::total_contrastive(st, {})->value().item();
  const double expect = pair_value(r[0], r[1], r[2]) + pair_value(r[3], r[4], r[5]) + pair_value(r[2], r[5], r[6]);
  EXPECT_NEAR(total, expect, 1e-12);
  EXPECT_GE(total, 0.0);
}

TEST(TotalContrastive, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(29);
  ad::ParameterSet<double> params;
  for (const char* name : {"t", "tid", "tf", "v", "vid", "vf", "c"}) params.add(name, random_tensor(4, 3, rng));
  auto fn = [](ad::Tape<double>& tape, const ad::ParameterSet<double>& p) {
    idsf::ContentState<double> st;
    st.text = tape.parameter(p, "t");
    st.text_id = tape.parameter(p, "tid");
    st.text_fused = tape.parameter(p, "tf");
    st.visual = tape.parameter(p, "v");
    st.visual_id = tape.parameter(p, "vid");
    st.visual_fused = tape.parameter(p, "vf");
    st.content = tape.parameter(p, "c");
    return *idsf::total_contrastive(st, ContrastiveOptions{0.5});
  };
  EXPECT_LT(idsf::testing::tape_fd_error(params, fn), 1e-4);
}
