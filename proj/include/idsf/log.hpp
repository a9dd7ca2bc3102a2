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

#include <functional>
#include <iostream>
#include <mutex>
#include <string>

namespace idsf::log {

enum class Level { kInfo, kWarning };

using Sink = std::function<void(Level, const std::string&)>;

namespace detail {
inline std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}
inline Sink& sink() {
  static Sink s = [](Level level, const std::string& msg) {
    std::clog << (level == Level::kWarning ? "[warn] " : "[info] ") << msg << '\n';
  };
  return s;
}
}  // namespace detail

// Replaces the process-wide sink; returns the previous one.
inline Sink set_sink(Sink s) {
  std::lock_guard<std::mutex> lock(detail::sink_mutex());
  std::swap(detail::sink(), s);
  return s;
}

inline void emit(Level level, const std::string& msg) {
  std::lock_guard<std::mutex> lock(detail::sink_mutex());
  if (detail::sink()) detail::sink()(level, msg);
}

inline void info(const std::string& msg) { emit(Level::kInfo, msg); }
inline void warn(const std::string& msg) { emit(Level::kWarning, msg); }

}  // namespace idsf::log
