#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "pgsr/types.hpp"

namespace pgsr {

/// splitmix64 finalizer. Used as the mixing function for every derived seed.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t combine_seed(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

/// Seed derivation scheme:
///   trial seed  = combine(master, trial_index)
///   stream seed = combine(trial seed, fnv1a64(stream_name))
///   counter key = combine(stream seed, counter)
constexpr std::uint64_t trial_seed(std::uint64_t master, std::uint64_t trial) noexcept {
  return combine_seed(master, trial);
}

constexpr std::uint64_t stream_seed(std::uint64_t parent, std::string_view name) noexcept {
  return combine_seed(parent, fnv1a64(name));
}

constexpr std::uint64_t counter_seed(std::uint64_t stream, std::uint64_t counter) noexcept {
  return combine_seed(stream, counter);
}

/// A short-lived random engine created from a derived key. Nothing is shared
/// between streams, so trials may run on any thread in any order.
class Stream {
 public:
  explicit Stream(std::uint64_t key) : engine_(key) {}

  double gaussian(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  Vector gaussian_vector(Eigen::Index n, double stddev = 1.0) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian(0.0, stddev);
    return v;
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pgsr
