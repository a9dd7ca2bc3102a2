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

#include <set>
#include <string>

#include <json.hpp>

#include "idsf/config.hpp"

namespace idsf {

inline const char* negatives_name(NegativesMode m) { return m == NegativesMode::kInBatch ? "in_batch" : "full_catalog"; }
inline const char* temperature_name(TemperatureMode m) {
  return m == TemperatureMode::kStandard ? "standard" : "literal";
}
inline const char* user_layer0_name(UserLayer0 m) { return m == UserLayer0::kShared ? "shared" : "per_modality"; }

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"layers", c.layers},
          {"tau", c.tau},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"lambda", c.lambda},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"ablation", ablation_name(c.ablation)},
          {"modalities", modality_string(c.modalities)},
          {"enhanced", c.modalities.enhanced},
          {"negatives", negatives_name(c.negatives)},
          {"temperature_mode", temperature_name(c.temperature)},
          {"user_layer0", user_layer0_name(c.user_layer0)},
          {"seed", c.seed}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"max_epochs", c.max_epochs}, {"patience", c.patience}, {"eval_threads", c.eval_threads}};
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename V>
void read_key(const nlohmann::json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    if constexpr (std::is_same_v<V, bool>) {
      if (!j.at(key).is_boolean()) throw ConfigError("");
      out = j.at(key).get<bool>();
    } else if constexpr (std::is_unsigned_v<V>) {
      const auto& v = j.at(key);
      if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError("");
      out = v.get<V>();
    } else if constexpr (std::is_same_v<V, double>) {
      if (!j.at(key).is_number()) throw ConfigError("");
      out = j.at(key).get<double>();
    } else {
      out = j.at(key).get<V>();
    }
  } catch (const std::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

}  // namespace detail

// Applies keys present in `j` on top of `c`; unknown keys are errors.
inline void apply_json(const nlohmann::json& j, ModelConfig& c, const std::string& where = "model") {
  detail::reject_unknown(j,
                         {"dim", "layers", "tau", "beta", "gamma", "lambda", "learning_rate", "batch_size", "ablation",
                          "modalities", "enhanced", "negatives", "temperature_mode", "user_layer0", "seed"},
                         where);
  detail::read_key(j, "dim", c.dim, where);
  detail::read_key(j, "layers", c.layers, where);
  detail::read_key(j, "tau", c.tau, where);
  detail::read_key(j, "beta", c.beta, where);
  detail::read_key(j, "gamma", c.gamma, where);
  detail::read_key(j, "lambda", c.lambda, where);
  detail::read_key(j, "learning_rate", c.learning_rate, where);
  detail::read_key(j, "batch_size", c.batch_size, where);
  detail::read_key(j, "seed", c.seed, where);
  std::string s;
  if (j.contains("ablation")) {
    detail::read_key(j, "ablation", s, where);
    c.ablation = parse_ablation(s);
  }
  bool enhanced = c.modalities.enhanced;
  detail::read_key(j, "enhanced", enhanced, where);
  if (j.contains("modalities")) {
    detail::read_key(j, "modalities", s, where);
    c.modalities = parse_modalities(s, enhanced);
  }
  c.modalities.enhanced = enhanced;
  if (j.contains("negatives")) {
    detail::read_key(j, "negatives", s, where);
    if (s == "in_batch") c.negatives = NegativesMode::kInBatch;
    else if (s == "full_catalog") c.negatives = NegativesMode::kFullCatalog;
    else throw ConfigError(where + ".negatives must be in_batch or full_catalog");
  }
  if (j.contains("temperature_mode")) {
    detail::read_key(j, "temperature_mode", s, where);
    if (s == "standard") c.temperature = TemperatureMode::kStandard;
    else if (s == "literal") c.temperature = TemperatureMode::kLiteral;
    else throw ConfigError(where + ".temperature_mode must be standard or literal");
  }
  if (j.contains("user_layer0")) {
    detail::read_key(j, "user_layer0", s, where);
    if (s == "shared") c.user_layer0 = UserLayer0::kShared;
    else if (s == "per_modality") c.user_layer0 = UserLayer0::kPerModality;
    else throw ConfigError(where + ".user_layer0 must be shared or per_modality");
  }
}

inline void apply_json(const nlohmann::json& j, TrainConfig& c, const std::string& where = "train") {
  detail::reject_unknown(j, {"max_epochs", "patience", "eval_threads"}, where);
  detail::read_key(j, "max_epochs", c.max_epochs, where);
  detail::read_key(j, "patience", c.patience, where);
  detail::read_key(j, "eval_threads", c.eval_threads, where);
  if (c.max_epochs == 0) throw ConfigError(where + ".max_epochs must be positive");
  if (c.patience == 0) throw ConfigError(where + ".patience must be positive");
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  apply_json(j, c);
  c.validate();
  return c;
}

}  // namespace idsf
