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

// Acceptance suite: one PASS / FAIL / SKIP line per criterion. Exits non-zero
// if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "idsf/app.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

using namespace idsf;
namespace fs = std::filesystem;
using idsf::testing::Dense;
using idsf::testing::random_tensor;

namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict = Verdict::kFail;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::kPass, std::move(d)}; }
Outcome fail(std::string d) { return {Verdict::kFail, std::move(d)}; }
Outcome skip(std::string d) { return {Verdict::kSkip, std::move(d)}; }
Outcome judge(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail(std::move(d)); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t users = 5, items = 8;
  std::mt19937_64 rng(41);
  std::vector<Edge> edges;
  for (std::uint32_t u = 0; u < users; ++u) {
    edges.push_back({u, u % static_cast<std::uint32_t>(items)});
    edges.push_back({u, (u + 3) % static_cast<std::uint32_t>(items)});
  }
  auto graph = std::make_shared<BipartiteGraph>(users, items, edges);
  auto text = std::make_shared<Tensor<double>>(random_tensor(items, 6, rng));
  auto visual = std::make_shared<Tensor<double>>(random_tensor(items, 7, rng));
  std::vector<Triple> triples;
  for (const auto& e : edges) {
    std::uint32_t neg = (e.item + 1) % items;
    while (graph->coefficient(e.user, neg) > 0) neg = (neg + 1) % items;
    triples.push_back({e.user, e.item, neg});
  }
  ModelConfig cfg;
  cfg.dim = 8;
  cfg.layers = 2;
  cfg.beta = 0.3;
  cfg.gamma = 0.3;
  cfg.lambda = 1e-2;
  cfg.seed = 5;
  IdsfModel<double> model(cfg, graph, {text, visual});
  const auto result = ad::grad_check(
      model.params(),
      [&](ad::Tape<double>& tape, const ad::ParameterSet<double>&) { return model.loss(tape, triples).total; }, 1e-5);
  const double secs = seconds_since(t0);
  return judge(result.max_relative_error < 1e-4 && secs < 60.0,
               fmt("max relative error %.3g over all parameter tensors (limit 1e-4), %.2f s (limit 60 s)",
                   result.max_relative_error, secs) +
                   " worst " + result.worst_parameter);
}

Outcome lightgcn_reduction() {
  std::mt19937_64 rng(31);
  double worst = 0.0;
  int graphs = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t users = 5 + trial * 4, items = 100 - users;
    const auto edges = idsf::testing::random_edges(users, items, 0.08, rng);
    if (edges.empty()) continue;
    ++graphs;
    auto graph = std::make_shared<BipartiteGraph>(users, items, edges);
    auto text = std::make_shared<Tensor<double>>(random_tensor(items, 5, rng));
    ModelConfig cfg;
    cfg.dim = 6;
    cfg.layers = 3;
    cfg.gamma = 0.0;
    cfg.modalities = parse_modalities("t");
    cfg.seed = 100 + trial;
    IdsfModel<double> model(cfg, graph, {text, nullptr});
    ad::Tape<double> tape(false);
    const auto f = model.forward_structure(tape);
    const Dense a_iu = idsf::testing::dense_item_from_user(users, items, edges);
    const Dense a_ui = idsf::testing::transpose(a_iu);
    Dense item = idsf::testing::to_dense(f.text_layers->items[0].value());
    Dense user = idsf::testing::to_dense(f.text_layers->users[0].value());
    Dense item_sum = item, user_sum = user;
    auto diff = [&](const Dense& a, const Tensor<double>& b) {
      for (std::size_t r = 0; r < a.size(); ++r)
        for (std::size_t c = 0; c < a[r].size(); ++c) worst = std::max(worst, std::abs(a[r][c] - b(r, c)));
    };
    for (std::size_t k = 1; k <= cfg.layers; ++k) {
      Dense next_item = idsf::testing::dense_mul(a_iu, user);
      Dense next_user = idsf::testing::dense_mul(a_ui, item);
      item = next_item;
      user = next_user;
      diff(item, f.text_layers->items[k].value());
      diff(user, f.text_layers->users[k].value());
      for (std::size_t r = 0; r < items; ++r)
        for (std::size_t c = 0; c < cfg.dim; ++c) item_sum[r][c] += item[r][c];
      for (std::size_t r = 0; r < users; ++r)
        for (std::size_t c = 0; c < cfg.dim; ++c) user_sum[r][c] += user[r][c];
    }
    for (auto& row : item_sum)
      for (auto& v : row) v /= static_cast<double>(cfg.layers + 1);
    for (auto& row : user_sum)
      for (auto& v : row) v /= static_cast<double>(cfg.layers + 1);
    diff(item_sum, f.item_structure.value());
    diff(user_sum, f.user_structure.value());
  }
  return judge(worst <= 1e-6, fmt("%.0f graphs of 100 nodes, max |model - dense oracle| %.3g (limit 1e-6)", graphs, worst));
}

Outcome metric_oracle() {
  SyntheticOptions so;
  so.users = 50;
  so.items = 100;
  const auto problem = synthetic_problem(so);
  const auto& ds = problem.dataset;
  ModelConfig cfg;
  cfg.dim = 16;
  const auto model = make_model<float>(cfg, problem);
  const auto e = model.embeddings();
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> pick(-1, 1);
  Tensor<float> tie_users(ds.user_count(), 2), tie_items(ds.item_count(), 2);
  for (auto& v : tie_users.values()) v = static_cast<float>(pick(rng));
  for (auto& v : tie_items.values()) v = static_cast<float>(pick(rng));
  std::size_t checks = 0, mismatches = 0;
  for (const auto* pair : {&e, static_cast<const Embeddings<float>*>(nullptr)}) {
    const auto& users = pair ? pair->users : tie_users;
    const auto& items = pair ? pair->items : tie_items;
    for (auto split : {Split::kValid, Split::kTest}) {
      for (std::size_t threads : {1u, 4u}) {
        EvalOptions opts;
        opts.threads = threads;
        const auto report = evaluate_embeddings(users, items, ds, split, opts);
        std::size_t evaluated = 0;
        const auto oracle = idsf::testing::brute_force_metrics(users, items, ds, split, opts.ks, &evaluated);
        ++checks;
        bool same = report.evaluated_users == evaluated;
        for (std::size_t j = 0; j < opts.ks.size(); ++j) {
          const auto& m = report.at.at(opts.ks[j]);
          same = same && m.recall == oracle[j].recall && m.precision == oracle[j].precision &&
                 m.ndcg == oracle[j].ndcg;
        }
        if (!same) ++mismatches;
      }
    }
  }
  return judge(mismatches == 0, fmt("%.0f of %.0f configurations bit-identical (real-valued and tied scores)",
                                    static_cast<double>(checks - mismatches), static_cast<double>(checks)));
}

Outcome attention_invariants() {
  std::mt19937_64 rng(4);
  double worst_sum = 0.0, worst_outside = 0.0, min_weight = 1.0;
  const int blocks = 10000;
  for (int trial = 0; trial < blocks; ++trial) {
    const std::size_t d = 1 + trial % 8, n = 1 + trial % 3;
    ad::ParameterSet<double> params;
    params.add("blk.q", random_tensor(d, 1, rng, -5, 5));
    params.add("blk.W", random_tensor(d, d, rng));
    params.add("blk.b", random_tensor(1, d, rng));
    ad::Tape<double> tape(false);
    auto a = tape.constant(random_tensor(n, d, rng, -3, 3));
    auto b = tape.constant(random_tensor(n, d, rng, -3, 3));
    auto out = attend(AttentionBlock<double>::bind(tape, params, "blk"), a, b);
    for (std::size_t r = 0; r < n; ++r) {
      const double w0 = out.weights.value()(r, 0), w1 = out.weights.value()(r, 1);
      worst_sum = std::max(worst_sum, std::abs(w0 + w1 - 1.0));
      min_weight = std::min({min_weight, w0, w1});
      for (std::size_t c = 0; c < d; ++c) {
        const double x = a.value()(r, c), y = b.value()(r, c), z = out.fused.value()(r, c);
        worst_outside = std::max({worst_outside, std::min(x, y) - z, z - std::max(x, y)});
      }
    }
  }
  return judge(worst_sum <= 1e-6 && min_weight >= 0.0 && worst_outside <= 1e-12,
               fmt("10^4 blocks: max |sum - 1| %.3g (limit 1e-6), min weight %.3g, max hull violation %.3g",
                   worst_sum, min_weight, worst_outside));
}

double pair_value(const Tensor<double>& a, const Tensor<double>& b, const Tensor<double>& f) {
  ad::Tape<double> tape(false);
  return pair_loss(tape.constant(a), tape.constant(b), tape.constant(f), ContrastiveOptions{}).value().item();
}

Outcome contrastive_properties() {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> factor(0.1, 10.0);
  double min_loss = 1e300, worst_scale = 0.0, worst_perm = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 9, d = 2 + trial % 5;
    const auto a = random_tensor(n, d, rng), b = random_tensor(n, d, rng), f = random_tensor(n, d, rng);
    const double base = pair_value(a, b, f);
    min_loss = std::min(min_loss, base);
    auto rescale = [&](Tensor<double> t) {
      for (std::size_t r = 0; r < t.rows(); ++r) {
        const double s = factor(rng);
        for (auto& v : t.row_span(r)) v *= s;
      }
      return t;
    };
    worst_scale = std::max(worst_scale, std::abs(base - pair_value(rescale(a), rescale(b), rescale(f))));
    std::vector<std::size_t> perm(n);
    for (std::size_t k = 0; k < n; ++k) perm[k] = k;
    std::shuffle(perm.begin(), perm.end(), rng);
    auto permute = [&](const Tensor<double>& t) {
      Tensor<double> out(t.rows(), t.cols());
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < d; ++c) out(r, c) = t(perm[r], c);
      return out;
    };
    worst_perm = std::max(worst_perm, std::abs(base - pair_value(permute(a), permute(b), permute(f))));
  }
  const Tensor<double> same({2, 2}, {1.0, 0.0, 1.0, 0.0});
  const double hand = std::abs(pair_value(same, same, same) + std::log(1.0 / 3.0));
  return judge(min_loss >= 0.0 && worst_scale <= 1e-6 && worst_perm <= 1e-6 && hand <= 1e-6,
               fmt("min loss %.4g, rescaling drift %.3g, permutation drift %.3g", min_loss, worst_scale, worst_perm) +
                   fmt(", |L - (-log 1/3)| = %.3g (limits 1e-6)", hand));
}

// Synthetic fixture for the training criteria.
nlohmann::json fixture_config(std::size_t max_epochs) {
  return {{"synthetic", {{"users", 50}, {"items", 200}, {"clusters", 5}, {"seed", 7}}},
          {"train", {{"max_epochs", max_epochs}, {"patience", 5}}}};
}

struct SilentLog {
  log::Sink previous;
  SilentLog() : previous(log::set_sink([](log::Level, const std::string&) {})) {}
  ~SilentLog() { log::set_sink(previous); }
};

int run_cli(const std::string& command, const nlohmann::json& cfg, const fs::path& out, std::string* errors = nullptr,
            app::Overrides o = {}) {
  const fs::path cfg_path = out.string() + ".config.json";
  fs::create_directories(out.parent_path());
  std::ofstream(cfg_path) << cfg.dump(2);
  o.out = out.string();
  std::ostringstream console, err;
  SilentLog quiet;
  const int code = app::run(command, cfg_path.string(), o, console, err);
  if (errors) *errors = err.str();
  return code;
}

Outcome ablation_direction() {
  const auto t0 = std::chrono::steady_clock::now();
  idsf::testing::TempDir dir("idsf_accept");
  std::string err;
  if (run_cli("ablate", fixture_config(200), dir.path() / "ablate", &err) != app::kOk) return fail("ablate failed: " + err);
  std::map<std::string, double> recall;
  for (const char* variant : {"none", "no_content"}) {
    const auto report = nlohmann::json::parse(slurp(dir.path() / "ablate" / "ablate" / variant / "eval_test.json"));
    recall[variant] = report.at("metrics").at("20").at("recall").get<double>();
  }
  const double secs = seconds_since(t0);
  return judge(recall["none"] > recall["no_content"] && secs < 600.0,
               fmt("test Recall@20 IDSF %.4f vs w/o content %.4f, %.0f s (limit 600 s)", recall["none"],
                   recall["no_content"], secs));
}

std::vector<double> history_losses(const fs::path& p) {
  std::vector<double> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(nlohmann::json::parse(line).at("loss").get<double>());
  return out;
}

std::map<std::string, std::string> files_under(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  return files;
}

Outcome determinism() {
  idsf::testing::TempDir dir("idsf_accept");
  const auto cfg = fixture_config(30);
  std::string err;
  for (const char* run : {"a", "b"}) {
    if (run_cli("train", cfg, dir.path() / run, &err) != app::kOk) return fail(std::string("train failed: ") + err);
  }
  const auto la = history_losses(dir.path() / "a" / "history.jsonl");
  const auto lb = history_losses(dir.path() / "b" / "history.jsonl");
  const auto ca = files_under(dir.path() / "a" / "checkpoint");
  const auto cb = files_under(dir.path() / "b" / "checkpoint");
  std::ostringstream d;
  d << la.size() << " epoch losses identical: " << (la == lb ? "yes" : "no") << ", " << ca.size()
    << " checkpoint files bit-identical: " << (ca == cb ? "yes" : "no");
  return judge(!la.empty() && la == lb && ca == cb, d.str());
}

Outcome baby_run() {
  const char* dir = std::getenv("IDSF_BABY_DIR");
  if (!dir) return skip("IDSF_BABY_DIR is not set; the Baby dataset is not available");
  idsf::testing::TempDir out("idsf_baby");
  nlohmann::json cfg = {{"dataset", "baby"}, {"data", {{"dir", dir}}}};
  std::string err;
  const auto t0 = std::chrono::steady_clock::now();
  if (run_cli("train", cfg, out.path() / "run", &err) != app::kOk) return fail("train failed: " + err);
  const auto report = nlohmann::json::parse(slurp(out.path() / "run" / "eval_test.json"));
  const double r20 = report.at("metrics").at("20").at("recall").get<double>();
  return judge(r20 >= 0.080 && r20 <= 0.105,
               fmt("test Recall@20 %.3f%% (accepted range 8.0%%-10.5%%), %.0f s", 100 * r20, seconds_since(t0)));
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_check},
      {"propagation reduces to normalized adjacency at gamma 0", lightgcn_reduction},
      {"metric oracle equivalence", metric_oracle},
      {"attention weights and convexity", attention_invariants},
      {"contrastive loss properties", contrastive_properties},
      {"ablation direction on synthetic data", ablation_direction},
      {"training determinism", determinism},
      {"Baby test Recall@20 range", baby_run},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* tag = o.verdict == Verdict::kPass ? "[PASS]" : o.verdict == Verdict::kFail ? "[FAIL]" : "[SKIP]";
    if (o.verdict == Verdict::kFail) ++failures;
    std::cout << tag << " " << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
