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
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "idsf/evaluator.hpp"
#include "idsf/log.hpp"
#include "idsf/model.hpp"
#include "idsf/optimizer.hpp"

namespace idsf {

// One epoch of BPR triples: every training pair once, each with a negative
// drawn uniformly from the items the user has not interacted with in train.
inline std::vector<Triple> sample_triples(const Dataset& ds, std::mt19937_64& rng) {
  const auto& pos = ds.positives(Split::kTrain);
  const std::size_t items = ds.item_count();
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(items - 1));
  std::vector<char> warned(ds.user_count(), 0);
  std::vector<Triple> out;
  out.reserve(ds.train().size());
  for (const auto& e : ds.train()) {
    if (pos.by_user[e.user].size() >= items) {
      if (!warned[e.user]) {
        warned[e.user] = 1;
        log::warn("user '" + ds.user_ids()[e.user] + "' has interacted with every item; no negatives, skipped");
      }
      continue;
    }
    std::uint32_t j;
    do {
      j = pick(rng);
    } while (pos.contains(e.user, j));
    out.push_back({e.user, e.item, j});
  }
  return out;
}

inline std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void restore_rng(std::mt19937_64& rng, const std::string& state) {
  std::istringstream is(state);
  is >> rng;
  if (!is) throw FormatError("unreadable rng state");
}

// Shuffles a fresh triple sample, runs one Adam step per batch and returns
// the mean batch loss.
template <typename T>
double train_epoch(IdsfModel<T>& model, Adam<T>& adam, const Dataset& ds, std::mt19937_64& rng) {
  auto triples = sample_triples(ds, rng);
  if (triples.empty()) throw DataError("no training triples");
  std::shuffle(triples.begin(), triples.end(), rng);
  const std::size_t bs = model.config().batch_size;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < triples.size(); start += bs) {
    const std::span<const Triple> batch(triples.data() + start, std::min(bs, triples.size() - start));
    auto dump = [&](const std::string& why) {
      std::string msg = "training diverged in batch " + std::to_string(batches) + " (" + why + "); triples:";
      for (std::size_t k = 0; k < std::min<std::size_t>(batch.size(), 16); ++k) {
        msg += " (" + std::to_string(batch[k].user) + "," + std::to_string(batch[k].pos) + "," +
               std::to_string(batch[k].neg) + ")";
      }
      if (batch.size() > 16) msg += " ...";
      return msg;
    };
    ad::Tape<T> tape;
    ad::GradientTable<T> grads;
    double value = 0.0;
    try {
      auto terms = model.loss(tape, batch);
      value = static_cast<double>(terms.total.value().item());
      if (!std::isfinite(value)) throw NumericError("non-finite loss");
      grads = tape.backward(terms.total, model.params());
    } catch (const NumericError& e) {
      throw NumericError(dump(e.what()));
    }
    for (const auto& [name, g] : grads.entries()) {
      if (!g.all_finite()) throw NumericError(dump("non-finite gradient for " + name));
    }
    adam.step(model.params(), grads);
    total += value;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

// Tracks the best validation score; stops after `patience` epochs without a
// strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {
    if (patience == 0) throw ConfigError("patience must be positive");
  }

  // Returns true when `metric` is a new best.
  bool update(double metric) {
    ++epochs_;
    if (epochs_ == 1 || metric > best_) {
      best_ = metric;
      best_epoch_ = epochs_;
      since_ = 0;
      return true;
    }
    ++since_;
    return false;
  }

  bool should_stop() const { return since_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t since_improvement() const { return since_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_ = 0;
  double best_ = 0.0;
};

struct HistoryEntry {
  std::size_t epoch = 0;
  double loss = 0.0;
  double recall20 = 0.0;
  double elapsed_s = 0.0;
};

inline nlohmann::json to_json(const HistoryEntry& h) {
  return {{"epoch", h.epoch}, {"loss", h.loss}, {"recall20", h.recall20}, {"elapsed_s", h.elapsed_s}};
}

struct FitOptions {
  TrainConfig train;
  std::string progress_log;  // JSON lines; empty disables
  std::function<void(const HistoryEntry&)> on_epoch;
};

template <typename T>
struct FitResult {
  std::vector<HistoryEntry> history;
  std::size_t best_epoch = 0;
  double best_recall20 = 0.0;
  ad::ParameterSet<T> best_params;
  std::string rng_state;  // after the best epoch
  bool early_stopped = false;
};

// Epoch loop with validation Recall@20 early stopping. On return the model
// holds the best parameters.
template <typename T>
FitResult<T> fit(IdsfModel<T>& model, const Dataset& ds, const FitOptions& opts = {}) {
  if (ds.valid().empty()) throw ConfigError("validation split is empty; early stopping needs it");
  if (opts.train.max_epochs == 0) throw ConfigError("max_epochs must be positive");
  std::mt19937_64 rng(model.config().seed ^ 0x5851f42d4c957f2dULL);
  Adam<T> adam(model.params(), AdamOptions{model.config().learning_rate});
  EarlyStopping stopper(opts.train.patience);
  EvalOptions eval_opts;
  eval_opts.ks = {20};
  eval_opts.threads = opts.train.eval_threads;
  std::ofstream progress;
  if (!opts.progress_log.empty()) {
    progress.open(opts.progress_log, std::ios::binary);
    if (!progress) throw DataError("cannot write progress log " + opts.progress_log);
  }
  FitResult<T> result;
  result.best_params = model.params();
  result.rng_state = rng_state(rng);
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= opts.train.max_epochs; ++epoch) {
    HistoryEntry h;
    h.epoch = epoch;
    h.loss = train_epoch(model, adam, ds, rng);
    h.recall20 = evaluate(model, ds, Split::kValid, eval_opts).recall(20);
    h.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(h);
    if (progress.is_open()) progress << to_json(h).dump() << "\n" << std::flush;
    if (opts.on_epoch) opts.on_epoch(h);
    if (stopper.update(h.recall20)) {
      result.best_params = model.params();
      result.rng_state = rng_state(rng);
    }
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  result.best_epoch = stopper.best_epoch();
  result.best_recall20 = stopper.best();
  model.load_parameters(result.best_params);
  return result;
}

}  // namespace idsf
