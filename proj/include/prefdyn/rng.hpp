#ifndef PREFDYN_RNG_HPP
#define PREFDYN_RNG_HPP

#include <cstdint>
#include <random>

namespace prefdyn {

// splitmix64 step; used to derive independent sub-seeds from a root seed
// so that per-trial / per-cell streams never overlap.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed, uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

inline double uniform01(Rng& rng) {
  // 53-bit mantissa draw, identical across platforms for a given engine state
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

// Box-Muller; avoids distribution-object state for reproducibility.
inline double normal(Rng& rng) {
  double u1 = 0.0;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline int uniform_int(Rng& rng, int n) {
  // rejection sampling for an unbiased draw in [0, n)
  uint64_t bound = static_cast<uint64_t>(n);
  uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<int>(v % bound);
}

}  // namespace prefdyn

#endif  // PREFDYN_RNG_HPP
