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

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "idsf/autodiff.hpp"
#include "idsf/config_json.hpp"
#include "idsf/matrix_io.hpp"

namespace idsf {

// A directory holding manifest.json and one matrix file per tensor.
struct Checkpoint {
  ModelConfig config;
  ad::ParameterSet<float> params;
  std::string rng_state;  // textual engine state
  nlohmann::json meta = nlohmann::json::object();
};

inline void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ck) {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& name : ck.params.names()) {
    const auto& t = ck.params.at(name);
    const std::string file = name + ".idsf";
    io::write_matrix((dir / file).string(), t);
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"file", file}});
  }
  nlohmann::json manifest = {{"format", "idsf-checkpoint"},
                             {"version", 1},
                             {"config", to_json(ck.config)},
                             {"tensors", tensors},
                             {"rng_state", ck.rng_state},
                             {"meta", ck.meta}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw DataError("no checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "idsf-checkpoint" || manifest.value("version", 0) != 1) {
    throw FormatError(dir.string() + ": not a version-1 checkpoint");
  }
  Checkpoint ck;
  ck.config = model_config_from_json(manifest.at("config"));
  ck.rng_state = manifest.value("rng_state", "");
  ck.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    auto t = io::read_matrix((dir / entry.at("file").get<std::string>()).string());
    if (t.rows() != entry.at("rows").get<std::size_t>() || t.cols() != entry.at("cols").get<std::size_t>()) {
      throw FormatError(dir.string() + ": tensor " + name + " shape disagrees with the manifest");
    }
    ck.params.add(name, std::move(t));
  }
  return ck;
}

}  // namespace idsf
