// saf/common.hpp
//
// Copyright 2026 The saf authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace saf {

// All recoverable faults surface as SafError; the CLI maps them to exit codes.
class SafError : public std::runtime_error {
 public:
  explicit SafError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void check_stream(std::ostringstream&) {}
template <class T, class... Rest>
void check_stream(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  check_stream(os, rest...);
}
}  // namespace detail

template <class... Args>
[[noreturn]] void fail(const Args&... args) {
  std::ostringstream os;
  detail::check_stream(os, args...);
  throw SafError(os.str());
}

#define SAF_CHECK(cond, ...)        \
  do {                              \
    if (!(cond)) ::saf::fail(__VA_ARGS__); \
  } while (0)

// Deterministic RNG. std::mt19937_64 for the stream, but the value mappings
// (uniform, normal) are written out by hand so that identical seeds give
// identical bits on every standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(splitmix(seed)) {}

  uint64_t next_u64() {
    // xorshift* keeps this self-contained and fast.
    uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545F4914F6CDD1DULL;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one value per call, the second of the pair is discarded.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  int64_t below(int64_t n) {  // [0, n)
    return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
  }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  // Stateless stream derivation: mixes several indices into a fresh seed so
  // that e.g. (seed, epoch, step, element) always yields the same substream.
  static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t h = splitmix(seed);
    h = splitmix(h ^ (a + 0x9E3779B97F4A7C15ULL));
    h = splitmix(h ^ (b + 0xC2B2AE3D27D4EB4FULL));
    h = splitmix(h ^ (c + 0x165667B19E3779F9ULL));
    return h;
  }

  static uint64_t hash_str(const std::string& s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ULL;
    }
    return h;
  }

 private:
  uint64_t state_;
};

// ---------------------------------------------------------------------------
// Worker pool. Operators may split work over disjoint output ranges; every
// output element is produced by exactly one worker with a fixed inner loop
// order, so results do not depend on the worker count. SAF_THREADS (env)
// or set_thread_count() controls the pool; 0/unset means single-threaded.
// ---------------------------------------------------------------------------

int thread_count();
void set_thread_count(int n);

// fn(begin, end) over [0, n) split into contiguous chunks, one per worker.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace saf
