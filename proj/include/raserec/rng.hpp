// Seeded randomness. Every random draw in the pipeline flows from one root
// seed through named sub-streams (init / dropout / shuffle / positive /
// kmeans / noise), so consuming draws in one stage never shifts another's.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "raserec/util.hpp"

namespace raserec {

// Derives a deterministic engine for (seed, stream-name, salts...).
inline std::mt19937_64 substream(std::uint64_t seed, std::string_view name,
                                 std::uint64_t salt0 = 0, std::uint64_t salt1 = 0,
                                 std::uint64_t salt2 = 0) {
  std::uint64_t h = fnv1a64(name);
  h = splitmix64(h ^ splitmix64(seed));
  h = splitmix64(h ^ splitmix64(salt0 + 0x9e3779b97f4a7c15ULL));
  h = splitmix64(h ^ splitmix64(salt1 + 0x7f4a7c159e3779b9ULL));
  h = splitmix64(h ^ splitmix64(salt2 + 0xc2b2ae3d27d4eb4fULL));
  return std::mt19937_64(h);
}

// Uniform in [0,1). Hand-rolled from engine bits so the draw sequence does
// not depend on the standard library implementation.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Rejection-free modulo is fine at 64-bit width
// for the small n used here.
inline std::uint64_t uniform_below(std::mt19937_64& g, std::uint64_t n) {
  return g() % n;
}

// Box-Muller standard normal.
inline double normal01(std::mt19937_64& g) {
  double u1 = uniform01(g);
  double u2 = uniform01(g);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Normal(0, std) clipped by redraw to |x| <= 2*std.
inline double truncated_normal(std::mt19937_64& g, double stddev) {
  for (;;) {
    double x = normal01(g) * stddev;
    if (std::abs(x) <= 2.0 * stddev) return x;
  }
}

// In-place Fisher-Yates.
template <typename T>
void shuffle_inplace(std::vector<T>& v, std::mt19937_64& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_below(g, i));
    std::swap(v[i - 1], v[j]);
  }
}

// k distinct indices from [0, n), in draw order.
inline std::vector<std::size_t> sample_distinct(std::mt19937_64& g, std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k && i < n; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_below(g, n - i));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace raserec
