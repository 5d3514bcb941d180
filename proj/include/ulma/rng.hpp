// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace ulma {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named RNG streams. Every stochastic component draws from its own stream
// derived as substream(seed, tag, index), so runs are reproducible and
// insensitive to evaluation order elsewhere in the program.
enum class Stream : uint64_t {
  kInit = 1,
  kDropout = 2,
  kShuffle = 3,
  kMasking = 4,
  kAugment = 5,
  kSynth = 6,
  kFold = 7,
};

inline uint64_t substream(uint64_t seed, Stream tag, uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ (static_cast<uint64_t>(tag) << 32)) + index);
}

// mt19937_64 core (the engine is fully specified by the standard) with
// hand-rolled samplers; std:: distributions differ between library
// implementations and would break run-to-run reproducibility guarantees
// across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), n > 0. Lemire multiply-shift; the bias of
  // n / 2^64 is irrelevant at the scales used here.
  uint64_t uniform_int(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller with a cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ulma
