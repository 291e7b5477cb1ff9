#pragma once

#include <cmath>
#include <cstdint>

namespace tte {

// SplitMix64 generator. Standard-library distributions are not bit-exact
// across implementations, so every random draw in the project goes through
// this class. Streams derived from the same seed with different stream ids
// are decorrelated by the mixing function.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(mix(seed)) {}
  Rng(uint64_t seed, uint64_t stream) : state_(mix(mix(seed) + mix(stream ^ 0x6a09e667f3bcc909ull))) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1), 53-bit resolution
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // uniform integer in [0,n); modulo bias is negligible for the n used here
  uint64_t below(uint64_t n) { return next_u64() % n; }

  // standard normal via Box-Muller, cosine branch only
  double normal() {
    double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

 private:
  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  uint64_t state_;
};

}  // namespace tte
