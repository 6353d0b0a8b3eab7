#pragma once

#include <cmath>
#include <cstdint>

namespace mono {

// Counter-style pseudorandom stream keyed by (seed, stream). The stream for a
// given key is identical across runs, platforms and thread counts, which is
// what makes lazily generated datasets reproducible: every sample owns the
// stream (dataset_seed, sample_index) and never shares state.
//
// Core generator is splitmix64; the key is dispersed with the murmur3
// finalizer so that nearby (seed, index) pairs land on unrelated streams.
class SampleRng {
 public:
  explicit SampleRng(uint64_t seed, uint64_t stream = 0)
      : state_(mix64(seed + 0x9E3779B97F4A7C15ull) ^
               mix64(stream * 0xBF58476D1CE4E5B9ull + 0x94D049BB133111EBull)) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in the open interval (0, 1).
  double uniform_open() {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Lemire's unbiased multiply-shift.
  uint64_t uniform_int(uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    uint64_t lo = static_cast<uint64_t>(m);
    if (lo < n) {
      uint64_t threshold = (-n) % n;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  // Standard normal via Box-Muller; two uniform draws per call.
  double normal() {
    double u1 = uniform_open();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 33)) * 0xFF51AFD7ED558CCDull;
    z = (z ^ (z >> 33)) * 0xC4CEB9FE1A85EC53ull;
    return z ^ (z >> 33);
  }

  uint64_t state_;
};

}  // namespace mono
