#pragma once

#include <cstdint>
#include <limits>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

// Seeded streams whose output is fixed by the C++ standard (mt19937_64 plus
// rejection sampling), so results match across platforms and library versions.
namespace uscore::random {

using Engine = std::mt19937_64;

// Uniform draw in [0, bound).
inline std::uint64_t bounded(Engine& rng, std::uint64_t bound) {
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = kMax - kMax % bound;
  while (true) {
    const std::uint64_t r = rng();
    if (r < limit) return r % bound;
  }
}

// Fisher-Yates.
template <typename T>
void shuffle(std::vector<T>& v, Engine& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

// Decorrelated seed for sub-stream `stream` of `seed` (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Standard normal by Box-Muller (std::normal_distribution is not portable).
inline double normal(Engine& rng) {
  double u1 = 0.0;
  while (u1 <= 0.0) u1 = uniform(rng);
  const double u2 = uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace uscore::random
