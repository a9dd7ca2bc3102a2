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
#include <string>

#include "idsf/error.hpp"

namespace idsf {

// Ablation variants. At most one may be set.
struct AblationFlags {
  bool no_content = false;           // score = <e_u^s, e_i^s>
  bool content_no_contrast = false;  // drop the contrastive term
  bool content_no_id = false;        // content fusion without ID tables
  bool structure_no_id = false;      // gamma = 0 during propagation

  int count() const { return int(no_content) + int(content_no_contrast) + int(content_no_id) + int(structure_no_id); }
  bool operator==(const AblationFlags&) const = default;
};

inline std::string ablation_name(const AblationFlags& f) {
  if (f.no_content) return "no_content";
  if (f.content_no_contrast) return "no_contrast";
  if (f.content_no_id) return "content_no_id";
  if (f.structure_no_id) return "structure_no_id";
  return "none";
}

inline AblationFlags parse_ablation(const std::string& name) {
  AblationFlags f;
  if (name == "none") return f;
  if (name == "no_content") f.no_content = true;
  else if (name == "no_contrast" || name == "content_no_contrast") f.content_no_contrast = true;
  else if (name == "content_no_id") f.content_no_id = true;
  else if (name == "structure_no_id") f.structure_no_id = true;
  else throw ConfigError("unknown ablation '" + name + "'");
  return f;
}

// Which salient modalities are present and whether they get ID enhancement
// (original versus enhanced content).
struct ModalityMask {
  bool text = true;
  bool visual = true;
  bool enhanced = true;

  bool both() const { return text && visual; }
  bool operator==(const ModalityMask&) const = default;
};

inline std::string modality_string(const ModalityMask& m) {
  return std::string(m.text ? "t" : "") + (m.visual ? "v" : "");
}

inline ModalityMask parse_modalities(const std::string& s, bool enhanced = true) {
  ModalityMask m{false, false, enhanced};
  if (s == "t") m.text = true;
  else if (s == "v") m.visual = true;
  else if (s == "tv" || s == "vt") m.text = m.visual = true;
  else throw ConfigError("modalities must be one of t, v, tv (got '" + s + "')");
  return m;
}

enum class NegativesMode { kInBatch, kFullCatalog };
enum class TemperatureMode {
  kStandard,  // exp(f / tau)
  kLiteral,   // exp(f) / tau; tau cancels in the ratio
};
enum class UserLayer0 {
  kShared,       // e_u^{m,(0)} = e_u^id for every modality
  kPerModality,  // separate user tables per modality for layer 0
};

struct ModelConfig {
  std::size_t dim = 128;
  std::size_t layers = 2;
  double tau = 0.5;
  double beta = 0.3;
  double gamma = 0.3;
  double lambda = 1e-4;
  double learning_rate = 5e-4;
  std::size_t batch_size = 1024;
  AblationFlags ablation;
  ModalityMask modalities;
  NegativesMode negatives = NegativesMode::kInBatch;
  TemperatureMode temperature = TemperatureMode::kStandard;
  UserLayer0 user_layer0 = UserLayer0::kShared;
  std::uint64_t seed = 2023;

  void validate() const {
    if (dim == 0) throw ConfigError("dim must be positive");
    if (layers == 0) throw ConfigError("layers (K) must be >= 1");
    if (!(tau > 0.0)) throw ConfigError("tau must be positive");
    if (!(beta >= 0.0) || !(gamma >= 0.0) || !(lambda >= 0.0)) throw ConfigError("beta, gamma, lambda must be >= 0");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (ablation.count() > 1) throw ConfigError("at most one ablation flag may be active");
    if (!modalities.text && !modalities.visual) throw ConfigError("at least one modality must be available");
  }

  bool uses_content() const { return !ablation.no_content; }
  bool enhances_content() const { return uses_content() && modalities.enhanced && !ablation.content_no_id; }
  double effective_gamma() const { return (ablation.structure_no_id || !modalities.enhanced) ? 0.0 : gamma; }
  bool uses_contrast() const { return uses_content() && !ablation.content_no_contrast && beta > 0.0; }
  bool needs_item_ids() const { return enhances_content() || effective_gamma() > 0.0; }
};

struct TrainConfig {
  std::size_t max_epochs = 1000;
  std::size_t patience = 5;
  std::size_t eval_threads = 1;
};

}  // namespace idsf
