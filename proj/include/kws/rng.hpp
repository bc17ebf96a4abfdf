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

#ifndef KWS_RNG_HPP_
#define KWS_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace kws {

// splitmix64; used to hash (seed, stream id) pairs into engine seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b));
}

inline std::uint64_t hash_name(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic random stream. The engine is std::mt19937_64 (fully
// specified by the standard); uniform and normal draws use explicit
// transforms instead of std::*_distribution so that every draw consumes a
// fixed, documented number of engine words:
//   uniform()      1 word
//   uniform_int()  1 word
//   normal()       2 words (Box-Muller, no cached spare)
// All randomness in the pipeline flows from one root seed through named
// substreams via fork()/at(). Forks derive from the construction seed, not
// the engine position, so forking never perturbs the parent stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  // Named substream, e.g. rng.fork("train").
  Rng fork(const std::string& name) const {
    return Rng(hash_combine(seed_, hash_name(name)));
  }
  // Indexed substream, e.g. per-example streams.
  Rng at(std::uint64_t index) const {
    return Rng(hash_combine(seed_, index + 1));
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Modulo bias is negligible for the tiny
  // ranges used here (indices, offsets) against a 64-bit word.
  std::uint64_t uniform_int(std::uint64_t n) { return engine_() % n; }

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal via Box-Muller; always consumes exactly two words.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Fisher-Yates; consumes n-1 words for n > 1.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace kws

#endif  // KWS_RNG_HPP_
