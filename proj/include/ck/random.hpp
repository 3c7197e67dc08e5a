#pragma once

#include <cstdint>
#include <random>

namespace ck {

using Rng = std::mt19937_64;

// Distribution helpers with a fixed bit-to-double mapping so results are
// reproducible across standard library implementations.
inline double rng_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double rng_uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * rng_uniform(rng);
}

inline std::size_t rng_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(seed * 0x9e3779b97f4a7c15ULL + stream + 1);
}

}  // namespace ck
