#pragma once

// Reproducible random streams.
//
// Every realization draws from std::mt19937_64, whose output sequence is fixed
// by the C++ standard. Seeds are expanded with SplitMix64 and uniform/normal
// variates are produced by the transforms below rather than by
// std::uniform_real_distribution / std::normal_distribution, whose algorithms
// are implementation-defined. Identical seeds therefore give identical clouds
// on every conforming toolchain.

#include <cmath>
#include <cstdint>
#include <random>

#include "collemit/types.hpp"

namespace collemit {

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of realization `index` under `master`:
///   splitmix64(master ^ splitmix64(index + 1)).
constexpr std::uint64_t realization_seed(std::uint64_t master,
                                         std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    spare_ = radius * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return radius * std::cos(2.0 * kPi * u2);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace collemit
