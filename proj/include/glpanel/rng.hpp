#ifndef GLPANEL_RNG_HPP
#define GLPANEL_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace glpanel {

/// splitmix64 finalizer.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of replication `index` derived from the master seed:
/// splitmix64(splitmix64(seed) ^ splitmix64(index + 1)).
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 1));
}

using Engine = std::mt19937_64;

/// Uniform draw on the open interval (0, 1) from 53 random bits.
inline double uniform_open(Engine& eng) {
  return (static_cast<double>(eng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal by Box-Muller; avoids implementation-defined std distributions
/// so that streams are identical across standard libraries.
inline double standard_normal(Engine& eng) {
  const double u1 = uniform_open(eng);
  const double u2 = uniform_open(eng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace glpanel

#endif
