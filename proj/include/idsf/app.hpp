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

// Command implementations behind the idsf executable.
#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "idsf/analysis.hpp"
#include "idsf/checkpoint.hpp"
#include "idsf/config_json.hpp"
#include "idsf/evaluator.hpp"
#include "idsf/log.hpp"
#include "idsf/pipeline.hpp"
#include "idsf/trainer.hpp"

namespace idsf::app {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kDataError = 3, kNumericError = 4 };

// Command-line values that override keys of the config document.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir;
  std::optional<std::string> out;
  std::optional<double> gamma;
  std::optional<double> beta;
  std::optional<std::string> modalities;
  std::optional<std::string> enhanced;
  std::optional<std::string> ablation;
  std::optional<std::string> checkpoint;
  std::optional<std::string> split;
  std::optional<std::size_t> parallel;
  bool grid = false;
};

struct DataSettings {
  std::string dir;
  std::string interactions = "interactions.tsv";
  std::string text_features = "text.idsf";
  std::string text_ids = "text.ids";
  std::string visual_features = "visual.idsf";
  std::string visual_ids = "visual.ids";
};

struct AnalysisSettings {
  std::size_t users = 10;
  std::size_t top_k = 10;
  std::uint64_t seed = 2023;
  std::vector<std::string> selectors = export_selectors();
};

struct SweepSettings {
  std::vector<double> gamma{0.0, 0.1, 0.3, 0.5, 1.0};
  std::vector<double> beta{0.0, 0.1, 0.3, 0.5, 1.0};
  bool grid = false;
  std::size_t parallel = 1;
};

struct RunConfig {
  json document;  // resolved document, written verbatim as the snapshot
  std::string dataset = "custom";
  std::optional<SyntheticOptions> synthetic;
  DataSettings data;
  SplitOptions split;
  std::string split_manifest;
  ModelConfig model;
  TrainConfig train;
  std::size_t eval_threads = 1;
  AnalysisSettings analysis;
  SweepSettings sweep;
};

// Dataset-specific beta / gamma defaults.
inline void apply_preset(const std::string& dataset, ModelConfig& m) {
  if (dataset == "baby") {
    m.beta = 0.3;
    m.gamma = 0.3;
  } else if (dataset == "sports") {
    m.beta = 1.0;
    m.gamma = 0.3;
  } else if (dataset == "clothing") {
    m.beta = 1.0;
    m.gamma = 1.0;
  } else if (dataset != "custom") {
    throw ConfigError("dataset must be one of baby, sports, clothing, custom (got '" + dataset + "')");
  }
}

inline json load_document(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  try {
    json doc = json::parse(in);
    if (!doc.is_object()) throw ConfigError(path + ": top level must be an object");
    return doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline void apply_overrides(json& doc, const Overrides& o) {
  auto section = [&](const char* name) -> json& {
    if (!doc.contains(name)) doc[name] = json::object();
    return doc[name];
  };
  if (o.seed) section("model")["seed"] = *o.seed;
  if (o.data_dir) section("data")["dir"] = *o.data_dir;
  if (o.gamma) section("model")["gamma"] = *o.gamma;
  if (o.beta) section("model")["beta"] = *o.beta;
  if (o.modalities) section("model")["modalities"] = *o.modalities;
  if (o.enhanced) {
    if (*o.enhanced != "on" && *o.enhanced != "off") throw ConfigError("--enhanced must be on or off");
    section("model")["enhanced"] = *o.enhanced == "on";
  }
  if (o.ablation) section("model")["ablation"] = *o.ablation;
  if (o.parallel) section("sweep")["parallel"] = *o.parallel;
  if (o.grid) section("sweep")["grid"] = true;
}

namespace detail {

template <typename V>
void get(const json& j, const char* key, V& out, const std::string& where) {
  idsf::detail::read_key(j, key, out, where);
}

inline std::vector<double> number_list(const json& j, const char* key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw ConfigError(where + "." + key + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw ConfigError(where + "." + key + " must be an array of numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace detail

inline RunConfig resolve_config(json doc, const Overrides& o) {
  apply_overrides(doc, o);
  idsf::detail::reject_unknown(doc, {"dataset", "data", "synthetic", "split", "model", "train", "eval", "analysis", "sweep"},
                               "config");
  RunConfig rc;
  rc.document = doc;
  detail::get(doc, "dataset", rc.dataset, "config");
  apply_preset(rc.dataset, rc.model);

  if (doc.contains("data")) {
    const auto& d = doc["data"];
    idsf::detail::reject_unknown(
        d, {"dir", "interactions", "text_features", "text_ids", "visual_features", "visual_ids"}, "data");
    detail::get(d, "dir", rc.data.dir, "data");
    detail::get(d, "interactions", rc.data.interactions, "data");
    detail::get(d, "text_features", rc.data.text_features, "data");
    detail::get(d, "text_ids", rc.data.text_ids, "data");
    detail::get(d, "visual_features", rc.data.visual_features, "data");
    detail::get(d, "visual_ids", rc.data.visual_ids, "data");
  }
  if (doc.contains("synthetic")) {
    const auto& s = doc["synthetic"];
    idsf::detail::reject_unknown(s,
                                 {"users", "items", "clusters", "seed", "text_dim", "visual_dim", "min_interactions",
                                  "max_interactions", "in_cluster_probability", "feature_noise"},
                                 "synthetic");
    SyntheticOptions so;
    detail::get(s, "users", so.users, "synthetic");
    detail::get(s, "items", so.items, "synthetic");
    detail::get(s, "clusters", so.clusters, "synthetic");
    detail::get(s, "seed", so.seed, "synthetic");
    detail::get(s, "text_dim", so.text_dim, "synthetic");
    detail::get(s, "visual_dim", so.visual_dim, "synthetic");
    detail::get(s, "min_interactions", so.min_interactions, "synthetic");
    detail::get(s, "max_interactions", so.max_interactions, "synthetic");
    detail::get(s, "in_cluster_probability", so.in_cluster_probability, "synthetic");
    detail::get(s, "feature_noise", so.feature_noise, "synthetic");
    rc.synthetic = so;
  }
  if (rc.synthetic && !rc.data.dir.empty()) throw ConfigError("set either data.dir or a synthetic section, not both");
  if (!rc.synthetic && rc.data.dir.empty()) {
    throw ConfigError("no data source: set data.dir (or --data-dir) or add a synthetic section");
  }
  if (doc.contains("split")) {
    const auto& s = doc["split"];
    idsf::detail::reject_unknown(s, {"ratios", "seed", "mode", "manifest"}, "split");
    if (s.contains("ratios")) {
      const auto r = detail::number_list(s, "ratios", "split");
      if (r.size() != 3) throw ConfigError("split.ratios needs three values");
      rc.split.ratios = {r[0], r[1], r[2]};
    }
    detail::get(s, "seed", rc.split.seed, "split");
    std::string mode = "per_user";
    detail::get(s, "mode", mode, "split");
    if (mode == "per_user") rc.split.mode = SplitMode::kPerUser;
    else if (mode == "global") rc.split.mode = SplitMode::kGlobal;
    else throw ConfigError("split.mode must be per_user or global");
    detail::get(s, "manifest", rc.split_manifest, "split");
  }
  validate_ratios(rc.split.ratios);
  if (doc.contains("model")) apply_json(doc["model"], rc.model);
  rc.model.validate();
  if (doc.contains("train")) apply_json(doc["train"], rc.train);
  rc.eval_threads = rc.train.eval_threads;
  if (doc.contains("eval")) {
    idsf::detail::reject_unknown(doc["eval"], {"threads"}, "eval");
    detail::get(doc["eval"], "threads", rc.eval_threads, "eval");
  }
  if (doc.contains("analysis")) {
    const auto& a = doc["analysis"];
    idsf::detail::reject_unknown(a, {"users", "top_k", "seed", "selectors"}, "analysis");
    detail::get(a, "users", rc.analysis.users, "analysis");
    detail::get(a, "top_k", rc.analysis.top_k, "analysis");
    detail::get(a, "seed", rc.analysis.seed, "analysis");
    if (a.contains("selectors")) {
      rc.analysis.selectors.clear();
      for (const auto& s : a["selectors"]) {
        if (!s.is_string()) throw ConfigError("analysis.selectors must be strings");
        const auto name = s.get<std::string>();
        const auto& known = export_selectors();
        if (std::find(known.begin(), known.end(), name) == known.end()) {
          throw ConfigError("unknown export selector '" + name + "'");
        }
        rc.analysis.selectors.push_back(name);
      }
    }
    if (rc.analysis.users == 0 || rc.analysis.top_k == 0) throw ConfigError("analysis.users and top_k must be positive");
  }
  if (doc.contains("sweep")) {
    const auto& s = doc["sweep"];
    idsf::detail::reject_unknown(s, {"gamma", "beta", "grid", "parallel"}, "sweep");
    if (s.contains("gamma")) rc.sweep.gamma = detail::number_list(s, "gamma", "sweep");
    if (s.contains("beta")) rc.sweep.beta = detail::number_list(s, "beta", "sweep");
    detail::get(s, "grid", rc.sweep.grid, "sweep");
    detail::get(s, "parallel", rc.sweep.parallel, "sweep");
    if (rc.sweep.parallel == 0) throw ConfigError("sweep.parallel must be positive");
  }
  return rc;
}

inline std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string snapshot_text(const RunConfig& rc) { return rc.document.dump(2) + "\n"; }

inline std::string run_id(const std::string& command, const RunConfig& rc) {
  return hex(io::fnv1a(command + "\n" + snapshot_text(rc))).substr(0, 12);
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

// Data files actually read for a run, with checksums.
struct LoadedProblem {
  Problem problem;
  json sources = json::array();
};

inline LoadedProblem load_problem(const RunConfig& rc, const ModelConfig& model) {
  LoadedProblem lp{Problem{Dataset({}, {}, {}, {}, {}), std::nullopt, std::nullopt}};
  auto record = [&](const std::string& role, const std::string& path) {
    lp.sources.push_back({{"role", role}, {"path", path}, {"fnv1a64", hex(io::file_checksum(path))}});
  };
  if (rc.synthetic) {
    const auto data = generate_synthetic(*rc.synthetic);
    if (!rc.split_manifest.empty()) {
      lp.problem = synthetic_problem(data, rc.split);
      lp.problem.dataset = read_split_manifest(rc.split_manifest);
      record("split_manifest", rc.split_manifest);
      const auto& ids = lp.problem.dataset.item_ids();
      lp.problem.text = align_features(data.text.values, data.item_ids, ids, Modality::kText, "synthetic", true);
      lp.problem.visual = align_features(data.visual.values, data.item_ids, ids, Modality::kVisual, "synthetic", true);
    } else {
      lp.problem = synthetic_problem(data, rc.split);
    }
    return lp;
  }
  const fs::path dir(rc.data.dir);
  if (!fs::is_directory(dir)) throw DataError("data directory '" + rc.data.dir + "' does not exist");
  if (!rc.split_manifest.empty()) {
    lp.problem.dataset = read_split_manifest(rc.split_manifest);
    record("split_manifest", rc.split_manifest);
  } else {
    const auto path = (dir / rc.data.interactions).string();
    if (!fs::exists(path)) throw DataError("interactions file '" + path + "' does not exist");
    lp.problem.dataset = split_dataset(load_interactions(path), rc.split);
    record("interactions", path);
  }
  auto features = [&](bool on, const std::string& file, const std::string& ids, Modality m,
                      std::optional<ModalFeatureTable>& slot) {
    if (!on) return;
    const auto fpath = (dir / file).string(), ipath = (dir / ids).string();
    if (!fs::exists(fpath) || !fs::exists(ipath)) {
      throw ConfigError(std::string(m == Modality::kText ? "text" : "visual") + " features ('" + fpath + "', '" +
                        ipath + "') are missing but modality '" + modality_tag(m) +
                        "' is enabled; adjust --modalities");
    }
    slot = load_features(fpath, ipath, lp.problem.dataset.item_ids(), m);
    record(std::string(modality_tag(m)) + "_features", fpath);
    record(std::string(modality_tag(m)) + "_ids", ipath);
  };
  features(model.modalities.text, rc.data.text_features, rc.data.text_ids, Modality::kText, lp.problem.text);
  features(model.modalities.visual, rc.data.visual_features, rc.data.visual_ids, Modality::kVisual, lp.problem.visual);
  return lp;
}

struct RunContext {
  std::string command;
  RunConfig config;
  fs::path out;
  std::string id;
  std::ostream* console = &std::cout;
};

inline RunContext make_context(const std::string& command, const std::string& config_path, const Overrides& o,
                               std::ostream& console) {
  RunContext ctx;
  ctx.command = command;
  ctx.config = resolve_config(load_document(config_path), o);
  ctx.id = run_id(command, ctx.config);
  ctx.out = o.out ? fs::path(*o.out) : fs::path("runs") / ctx.id;
  ctx.console = &console;
  fs::create_directories(ctx.out);
  return ctx;
}

inline void write_run_manifest(const RunContext& ctx, const json& sources, const json& extra = json::object()) {
  write_text(ctx.out / "config.json", snapshot_text(ctx.config));
  json m = {{"run_id", ctx.id},
            {"command", ctx.command},
            {"config_snapshot", "config.json"},
            {"output_dir", ctx.out.string()},
            {"data", sources},
            {"split_manifest", "split.json"}};
  if (ctx.config.synthetic) m["synthetic"] = ctx.config.document["synthetic"];
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_json(ctx.out / "manifest.json", m);
}

// ---------------------------------------------------------------------------

struct TrainOutcome {
  FitResult<float> fit;
  EvalReport test;
};

inline TrainOutcome train_into(const fs::path& dir, const ModelConfig& cfg, const RunConfig& rc, const Problem& p,
                               bool quiet = false) {
  fs::create_directories(dir);
  auto model = make_model<float>(cfg, p);
  FitOptions opts;
  opts.train = rc.train;
  opts.progress_log = (dir / "history.jsonl").string();
  if (!quiet) {
    opts.on_epoch = [](const HistoryEntry& h) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "epoch %zu  loss %.6f  valid R@20 %.4f", h.epoch, h.loss, h.recall20);
      log::info(buf);
    };
  }
  TrainOutcome out;
  out.fit = fit(model, p.dataset, opts);
  Checkpoint ck{cfg, model.params(), out.fit.rng_state,
                {{"best_epoch", out.fit.best_epoch},
                 {"best_valid_recall20", out.fit.best_recall20},
                 {"epochs_run", out.fit.history.size()},
                 {"early_stopped", out.fit.early_stopped}}};
  save_checkpoint(dir / "checkpoint", ck);
  EvalOptions eo;
  eo.threads = rc.eval_threads;
  out.test = evaluate(model, p.dataset, Split::kTest, eo);
  out.test.config = to_json(cfg);
  write_json(dir / "eval_test.json", out.test.to_json());
  write_text(dir / "eval_test.txt", out.test.table());
  return out;
}

inline std::string metric_row(const EvalReport& r) {
  char buf[160];
  const auto& a = r.at.at(10);
  const auto& b = r.at.at(20);
  std::snprintf(buf, sizeof buf, "%.3f,%.3f,%.3f,%.3f,%.3f,%.3f", 100 * a.recall, 100 * a.precision, 100 * a.ndcg,
                100 * b.recall, 100 * b.precision, 100 * b.ndcg);
  return buf;
}

inline int cmd_prepare(RunContext& ctx) {
  const auto lp = load_problem(ctx.config, ctx.config.model);
  const auto& ds = lp.problem.dataset;
  write_split_manifest((ctx.out / "split.json").string(), ds, ctx.config.split);
  if (ctx.config.synthetic) {
    const auto data = generate_synthetic(*ctx.config.synthetic);
    const fs::path dir = ctx.out / "data";
    fs::create_directories(dir);
    write_interactions((dir / "interactions.tsv").string(), data.records);
    save_features((dir / "text.idsf").string(), (dir / "text.ids").string(), *lp.problem.text, ds.item_ids());
    save_features((dir / "visual.idsf").string(), (dir / "visual.ids").string(), *lp.problem.visual, ds.item_ids());
  }
  write_run_manifest(ctx, lp.sources);
  *ctx.console << "users " << ds.user_count() << "  items " << ds.item_count() << "  train " << ds.train().size()
               << "  valid " << ds.valid().size() << "  test " << ds.test().size() << "\n"
               << "split manifest: " << (ctx.out / "split.json").string() << "\n";
  return kOk;
}

inline int cmd_train(RunContext& ctx) {
  const auto lp = load_problem(ctx.config, ctx.config.model);
  write_split_manifest((ctx.out / "split.json").string(), lp.problem.dataset, ctx.config.split);
  write_run_manifest(ctx, lp.sources);
  const auto outcome = train_into(ctx.out, ctx.config.model, ctx.config, lp.problem);
  *ctx.console << "best epoch " << outcome.fit.best_epoch << " of " << outcome.fit.history.size()
               << "  valid R@20 " << outcome.fit.best_recall20 << "\n"
               << outcome.test.table() << "checkpoint: " << (ctx.out / "checkpoint").string() << "\n";
  return kOk;
}

inline IdsfModel<float> model_for(const RunContext& ctx, const std::optional<std::string>& checkpoint,
                                  const Problem& p) {
  if (!checkpoint) {
    log::warn("no --checkpoint given; using a freshly initialized model");
    return make_model<float>(ctx.config.model, p);
  }
  const auto ck = load_checkpoint(*checkpoint);
  auto model = make_model<float>(ck.config, p);
  model.load_parameters(ck.params);
  return model;
}

inline ModelConfig model_config_for(const RunContext& ctx, const std::optional<std::string>& checkpoint) {
  return checkpoint ? load_checkpoint(*checkpoint).config : ctx.config.model;
}

inline int cmd_evaluate(RunContext& ctx, const Overrides& o) {
  Split split = Split::kTest;
  if (o.split) {
    if (*o.split == "valid") split = Split::kValid;
    else if (*o.split != "test") throw ConfigError("--split must be valid or test");
  }
  const auto lp = load_problem(ctx.config, model_config_for(ctx, o.checkpoint));
  auto model = model_for(ctx, o.checkpoint, lp.problem);
  EvalOptions eo;
  eo.threads = ctx.config.eval_threads;
  auto report = evaluate(model, lp.problem.dataset, split, eo);
  report.config = to_json(model.config());
  const std::string stem = std::string("eval_") + split_name(split);
  write_json(ctx.out / (stem + ".json"), report.to_json());
  write_text(ctx.out / (stem + ".txt"), report.table());
  write_run_manifest(ctx, lp.sources, {{"checkpoint", o.checkpoint ? json(*o.checkpoint) : json(nullptr)}});
  *ctx.console << report.table();
  return kOk;
}

inline const std::vector<std::pair<std::string, std::string>>& ablation_variants() {
  static const std::vector<std::pair<std::string, std::string>> v{{"w/o content", "no_content"},
                                                                  {"content w/o contrast", "no_contrast"},
                                                                  {"content w/o ID", "content_no_id"},
                                                                  {"structure w/o ID", "structure_no_id"},
                                                                  {"IDSF", "none"}};
  return v;
}

inline int cmd_ablate(RunContext& ctx) {
  const auto lp = load_problem(ctx.config, ctx.config.model);
  write_split_manifest((ctx.out / "split.json").string(), lp.problem.dataset, ctx.config.split);
  write_run_manifest(ctx, lp.sources);
  std::string csv = "variant,R@10,P@10,N@10,R@20,P@20,N@20\n";
  std::string table = "Metric(x100%)          R@10    P@10    N@10    R@20    P@20    N@20\n";
  for (const auto& [label, flag] : ablation_variants()) {
    ModelConfig cfg = ctx.config.model;
    cfg.ablation = parse_ablation(flag);
    log::info("ablation variant: " + label);
    const auto outcome = train_into(ctx.out / "ablate" / flag, cfg, ctx.config, lp.problem, true);
    csv += label + "," + metric_row(outcome.test) + "\n";
    const auto& a = outcome.test.at.at(10);
    const auto& b = outcome.test.at.at(20);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-21s %7.3f %7.3f %7.3f %7.3f %7.3f %7.3f\n", label.c_str(), 100 * a.recall,
                  100 * a.precision, 100 * a.ndcg, 100 * b.recall, 100 * b.precision, 100 * b.ndcg);
    table += buf;
  }
  write_text(ctx.out / "ablation.csv", csv);
  write_text(ctx.out / "ablation.txt", table);
  *ctx.console << table;
  return kOk;
}

struct SweepPoint {
  std::string curve;  // gamma, beta or grid
  double gamma = 0.0;
  double beta = 0.0;
};

inline std::vector<SweepPoint> sweep_points(const RunConfig& rc) {
  std::vector<SweepPoint> pts;
  if (rc.sweep.grid) {
    for (double g : rc.sweep.gamma)
      for (double b : rc.sweep.beta) pts.push_back({"grid", g, b});
    return pts;
  }
  for (double g : rc.sweep.gamma) pts.push_back({"gamma", g, rc.model.beta});
  for (double b : rc.sweep.beta) pts.push_back({"beta", rc.model.gamma, b});
  return pts;
}

inline std::string point_name(const SweepPoint& p) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%s_g%g_b%g", p.curve.c_str(), p.gamma, p.beta);
  return buf;
}

inline int cmd_sweep(RunContext& ctx) {
  const auto lp = load_problem(ctx.config, ctx.config.model);
  write_split_manifest((ctx.out / "split.json").string(), lp.problem.dataset, ctx.config.split);
  write_run_manifest(ctx, lp.sources);
  const auto points = sweep_points(ctx.config);
  std::vector<std::optional<TrainOutcome>> results(points.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t k = next++; k < points.size(); k = next++) {
      try {
        ModelConfig cfg = ctx.config.model;
        cfg.gamma = points[k].gamma;
        cfg.beta = points[k].beta;
        cfg.validate();
        results[k] = train_into(ctx.out / "sweep" / point_name(points[k]), cfg, ctx.config, lp.problem, true);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(ctx.config.sweep.parallel, points.size());
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  std::string csv = "curve,gamma,beta,best_epoch,valid_R@20,R@10,P@10,N@10,R@20,P@20,N@20\n";
  for (std::size_t k = 0; k < points.size(); ++k) {
    char head[160];
    std::snprintf(head, sizeof head, "%s,%g,%g,%zu,%.3f,", points[k].curve.c_str(), points[k].gamma, points[k].beta,
                  results[k]->fit.best_epoch, 100 * results[k]->fit.best_recall20);
    csv += head + metric_row(results[k]->test) + "\n";
  }
  write_text(ctx.out / "sweep.csv", csv);
  *ctx.console << csv;
  return kOk;
}

inline int cmd_analyze(RunContext& ctx, const Overrides& o) {
  if (!o.checkpoint) throw ConfigError("analyze needs --checkpoint");
  const auto lp = load_problem(ctx.config, model_config_for(ctx, o.checkpoint));
  const auto model = model_for(ctx, o.checkpoint, lp.problem);
  const auto& ds = lp.problem.dataset;
  const auto& as = ctx.config.analysis;
  std::mt19937_64 rng(as.seed);
  const auto sample = sample_user_items(ds, as.users, rng);
  const fs::path dir = ctx.out / "analysis";
  fs::create_directories(dir);
  json summary = {{"users", json::array()}, {"items", sample.items}, {"groups", sample.groups}, {"top_k", as.top_k}};
  for (auto u : sample.users) summary["users"].push_back(ds.user_ids()[u]);
  json per_selector = json::object();
  for (const auto& which : as.selectors) {
    ExportedTable table;
    try {
      table = export_embeddings(model, which);
    } catch (const ConfigError& e) {
      log::warn(std::string("skipping selector: ") + e.what());
      continue;
    }
    const auto& ids = table.per_user ? ds.user_ids() : ds.item_ids();
    std::vector<long long> labels(table.values.rows(), -1);
    if (table.per_user) {
      for (std::size_t g = 0; g < sample.users.size(); ++g) labels[sample.users[g]] = static_cast<long long>(g);
    } else {
      for (std::size_t k = 0; k < sample.items.size(); ++k) labels[sample.items[k]] = static_cast<long long>(sample.groups[k]);
    }
    write_export((dir / which).string(), table.values, ids, labels);
    if (table.per_user) continue;
    Tensor<float> rows(sample.items.size(), table.values.cols());
    for (std::size_t r = 0; r < sample.items.size(); ++r)
      for (std::size_t c = 0; c < rows.cols(); ++c) rows(r, c) = table.values(sample.items[r], c);
    const auto sim = similarity_matrix(rows);
    write_similarity_csv((dir / (which + "_similarity.csv")).string(), sim);
    write_similarity_csv((dir / (which + "_top" + std::to_string(as.top_k) + ".csv")).string(),
                         top_k_row_filter(sim, as.top_k));
    const auto [within, cross] = group_similarity_means(sim, sample.groups);
    per_selector[which] = {{"within_group_mean", within}, {"cross_group_mean", cross}, {"zero_rows", sim.zero_rows}};
  }
  summary["similarity"] = per_selector;
  write_json(dir / "summary.json", summary);
  write_run_manifest(ctx, lp.sources, {{"checkpoint", *o.checkpoint}});
  *ctx.console << "sampled " << sample.users.size() << " users, " << sample.items.size() << " items\n"
               << per_selector.dump(2) << "\n";
  return kOk;
}

// Runs one command and maps failures to exit codes.
inline int run(const std::string& command, const std::string& config_path, const Overrides& o,
               std::ostream& console = std::cout, std::ostream& errors = std::cerr) {
  try {
    auto ctx = make_context(command, config_path, o, console);
    if (command == "prepare") return cmd_prepare(ctx);
    if (command == "train") return cmd_train(ctx);
    if (command == "evaluate") return cmd_evaluate(ctx, o);
    if (command == "ablate") return cmd_ablate(ctx);
    if (command == "sweep") return cmd_sweep(ctx);
    if (command == "analyze") return cmd_analyze(ctx, o);
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    errors << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DataError& e) {
    errors << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const SamplingError& e) {
    errors << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    errors << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericError& e) {
    errors << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const std::exception& e) {
    errors << "error: " << e.what() << "\n";
    return kFailure;
  }
}

// Parses argv and dispatches.
inline int main_entry(int argc, const char* const* argv, std::ostream& console = std::cout,
                      std::ostream& errors = std::cerr) {
  CLI::App cli{"IDSF multimodal recommender: training, evaluation and analysis"};
  cli.require_subcommand(1);
  std::string config_path;
  Overrides o;
  std::string enhanced, modalities, ablation, data_dir, out, checkpoint, split;
  double gamma = 0, beta = 0;
  std::uint64_t seed = 0;
  std::size_t parallel = 1;
  cli.add_option("--config", config_path, "JSON config file");
  auto* seed_opt = cli.add_option("--seed", seed, "model seed");
  auto* data_opt = cli.add_option("--data-dir", data_dir, "directory with interactions and features");
  auto* out_opt = cli.add_option("--out", out, "run output directory");
  auto* gamma_opt = cli.add_option("--gamma", gamma, "ID retention weight");
  auto* beta_opt = cli.add_option("--beta", beta, "contrastive loss weight");
  auto* mod_opt = cli.add_option("--modalities", modalities, "t, v or tv");
  auto* enh_opt = cli.add_option("--enhanced", enhanced, "on or off");
  auto* abl_opt = cli.add_option("--ablation", ablation,
                                 "none, no_content, no_contrast, content_no_id, structure_no_id");
  auto* ck_opt = cli.add_option("--checkpoint", checkpoint, "checkpoint directory (evaluate, analyze)");
  auto* split_opt = cli.add_option("--split", split, "valid or test (evaluate)");
  auto* par_opt = cli.add_option("--parallel", parallel, "concurrent sweep points");
  auto* grid_flag = cli.add_flag("--grid", "full gamma x beta grid (sweep)");
  const std::pair<const char*, const char*> commands[] = {
      {"prepare", "split the data and write the split manifest"},
      {"train", "train with early stopping and write a checkpoint"},
      {"evaluate", "evaluate a checkpoint on the validation or test split"},
      {"ablate", "train the full model and four ablation variants"},
      {"sweep", "sweep gamma and beta"},
      {"analyze", "export embeddings and similarity matrices"}};
  for (const auto& [name, help] : commands) cli.add_subcommand(name, help)->fallthrough();
  try {
    cli.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    console << cli.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    errors << "usage error: " << e.what() << "\n" << cli.help();
    return kConfigError;
  }
  if (*seed_opt) o.seed = seed;
  if (*data_opt) o.data_dir = data_dir;
  if (*out_opt) o.out = out;
  if (*gamma_opt) o.gamma = gamma;
  if (*beta_opt) o.beta = beta;
  if (*mod_opt) o.modalities = modalities;
  if (*enh_opt) o.enhanced = enhanced;
  if (*abl_opt) o.ablation = ablation;
  if (*ck_opt) o.checkpoint = checkpoint;
  if (*split_opt) o.split = split;
  if (*par_opt) o.parallel = parallel;
  o.grid = grid_flag->count() > 0;
  return run(cli.get_subcommands().front()->get_name(), config_path, o, console, errors);
}

}  // namespace idsf::app
