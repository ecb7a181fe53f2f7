#pragma once

#include <cmath>
#include <cstdint>

namespace music {

// splitmix64 step; the basis for all randomness in the library.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream key from a seed and up to three indices,
// e.g. (seed, epoch, sample, view). Same inputs, same stream, always.
inline uint64_t derive_stream(uint64_t seed, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0) {
  uint64_t s = seed;
  (void)splitmix64(s);
  s ^= 0xA076'1D64'78BD'642FULL * (a + 1);
  (void)splitmix64(s);
  s ^= 0xE703'7ED1'A0B4'28DBULL * (b + 1);
  (void)splitmix64(s);
  s ^= 0x8EBC'6AF0'9C88'C6E3ULL * (c + 1);
  return splitmix64(s);
}

// Small deterministic generator. Avoids std::normal_distribution on purpose:
// its output is implementation-defined, which would break bit-stable files
// across toolchains.
class Rng {
 public:
  explicit Rng(uint64_t stream_key) : state_(stream_key) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

  // Box-Muller; the paired draw is discarded to keep the stream position
  // a pure function of call count.
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 < 0x1.0p-100) u1 = 0x1.0p-100;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Uniform integer in [0, n), n > 0. Bias is negligible for desk-scale n.
  uint64_t below(uint64_t n) { return next_u64() % n; }

 private:
  uint64_t state_;
};

}  // namespace music
