#pragma once

#include <cmath>
#include <cstdint>

namespace fibra {

// xoshiro256** seeded through splitmix64. All schedule generation and data
// seeding flows through one of these so runs are reproducible from a single
// u64 seed, independent of the standard library's distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  uint64_t next() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Unbiased uniform in [0, n) via Lemire's multiply-shift rejection.
  uint64_t below(uint64_t n) {
    __uint128_t m = static_cast<__uint128_t>(next()) * n;
    auto lo = static_cast<uint64_t>(m);
    if (lo < n) {
      const uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<__uint128_t>(next()) * n;
        lo = static_cast<uint64_t>(m);
      }
    }
    return static_cast<uint64_t>(m >> 64);
  }

  // Uniform in (0, 1]; never returns 0 so it is safe under log().
  double unit() {
    const uint64_t bits = next() >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
  }

  // Exponential with the given rate (mean 1/rate), inverse-CDF.
  double exponential(double rate) { return -std::log(unit()) / rate; }

  // Geometric on {0,1,2,...} with the given mean, inverse-CDF.
  uint64_t geometric(double mean) {
    const double p = 1.0 / (mean + 1.0);
    const double g = std::floor(std::log(unit()) / std::log1p(-p));
    return g < 0 ? 0 : static_cast<uint64_t>(g);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    uint64_t z = (x += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t s_[4];
};

}  // namespace fibra
