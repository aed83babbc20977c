#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace scorelab {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// independent stream per (seed, index); used for per-trajectory / per-task splits
inline Rng stream_rng(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(seed ^ splitmix64(index + 0x5851f42d4c957f2dULL)));
}

inline double normal01(Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  return nd(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  return ud(rng);
}

inline std::vector<double> normal_vec(Rng& rng, int n) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> z(n);
  for (auto& v : z) v = nd(rng);
  return z;
}

}  // namespace scorelab
