// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace meshpose {

// FNV-1a, used to derive named substreams and to fingerprint configs.
inline uint64_t fnv1a(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Deterministic random stream. mt19937_64 is bit-exact by the standard; the
// value mappings below are our own so results do not depend on libstdc++'s
// distribution implementations.
class RngStream {
 public:
  RngStream() : eng_(0) {}
  explicit RngStream(uint64_t seed) : eng_(seed) {}
  RngStream(uint64_t seed, std::string_view name)
      : eng_(fnv1a(name) ^ (seed * 0x9e3779b97f4a7c15ull)) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) {
    // Rejection-free modulo is fine here; n is tiny compared to 2^64.
    return eng_() % n;
  }

  // Standard normal via Box-Muller (one value per call, no cached spare so
  // the stream position is call-count deterministic).
  double normal() {
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace meshpose
