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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "idsf/error.hpp"
#include "idsf/tensor.hpp"

// Binary matrix files: "IDSF" magic, u32 version (1), u32 rows, u32 dim,
// then rows*dim float32 values, all little-endian, row-major.
namespace idsf::io {

static_assert(std::endian::native == std::endian::little, "matrix files assume a little-endian host");

inline constexpr std::array<char, 4> kMagic = {'I', 'D', 'S', 'F'};
inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;

inline void write_matrix(const std::string& path, const Tensor<float>& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  const std::uint32_t header[3] = {kFormatVersion, static_cast<std::uint32_t>(m.rows()),
                                   static_cast<std::uint32_t>(m.cols())};
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline Tensor<float> read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kHeaderBytes) throw FormatError(path + ": truncated header");
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) throw FormatError(path + ": bad magic");
  std::uint32_t header[3];
  std::memcpy(header, bytes.data() + 4, sizeof(header));
  if (header[0] != kFormatVersion) {
    throw FormatError(path + ": unsupported format version " + std::to_string(header[0]));
  }
  const std::size_t rows = header[1], dim = header[2];
  const std::size_t expected = kHeaderBytes + rows * dim * sizeof(float);
  if (bytes.size() != expected) {
    throw FormatError(path + ": header declares " + std::to_string(rows) + "x" + std::to_string(dim) + " (" +
                      std::to_string(expected) + " bytes) but file has " + std::to_string(bytes.size()));
  }
  Tensor<float> m(rows, dim);
  std::memcpy(m.data(), bytes.data() + kHeaderBytes, rows * dim * sizeof(float));
  return m;
}

// One id per line; line k names row k.
inline std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& l : lines) out << l << '\n';
}

inline constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// FNV-1a over the raw bytes; used for run-manifest checksums.
inline std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  }
  return h;
}

}  // namespace idsf::io
