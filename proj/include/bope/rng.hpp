#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace bope {

// Counter-based random number generation. Every random variate in the
// project is addressed by an explicit key (seed plus a path of integer
// components), so replications, trajectories and rollouts can be generated
// in any order, on any number of workers, with identical results.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer (Steele, Lea & Flood / Vigna).
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Child stream key for a (seed, path) address, e.g.
// derive_seed(master, {horizon, replication}) or
// derive_seed(dataset_seed, {trajectory, step, variable}).
inline constexpr std::uint64_t derive_seed(std::uint64_t seed,
                                           std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed ^ 0xA5A5B5B5C5C5D5D5ULL);
  for (std::uint64_t c : path) {
    h = splitmix64(h ^ splitmix64(c + kGolden));
  }
  return h;
}

// j-th 64-bit draw of the counter stream rooted at key.
inline constexpr std::uint64_t stream_bits(std::uint64_t key, std::uint64_t j) {
  return splitmix64(key + j * kGolden);
}

// Maps 64 random bits into (0,1), excluding both endpoints.
inline double bits_to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

inline double uniform01(std::uint64_t key, std::uint64_t j = 0) {
  return bits_to_unit(stream_bits(key, j));
}

// One standard normal per key via Box-Muller; consumes draws 0 and 1 of the
// key's stream. Deterministic per (key) on a given platform/libm.
inline double standard_normal(std::uint64_t key) {
  const double u1 = uniform01(key, 0);
  const double u2 = uniform01(key, 1);
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace bope
