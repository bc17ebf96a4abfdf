/* Copyright 2026 The PatchKWS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef KWS_COMMON_HPP_
#define KWS_COMMON_HPP_

#include <cstdio>
#include <cstdlib>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace kws {

// Error taxonomy mirrored by the CLI exit codes (2/3/4).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void log_warn(const std::string& msg) {
  std::fprintf(stderr, "[patchkws warn] %s\n", msg.c_str());
}

inline void log_info(const std::string& msg) {
  std::fprintf(stderr, "[patchkws] %s\n", msg.c_str());
}

// Worker cap: PATCHKWS_WORKERS env var, default 1 (single-threaded).
inline int max_workers() {
  if (const char* env = std::getenv("PATCHKWS_WORKERS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// Runs fn(i) for i in [0, n). Each index must touch only its own output
// slot; results are then independent of the worker count.
inline void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn) {
  const int workers = static_cast<int>(
      std::min<std::int64_t>(max_workers(), n > 0 ? n : 1));
  if (workers <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      for (std::int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace kws

#endif  // KWS_COMMON_HPP_
