#pragma once

#include <cmath>
#include <cstdint>

namespace spinbath {

// Self-contained RNG stack: splitmix64 for seeding/stream derivation and
// xoshiro256++ for generation, with explicit uniform/gaussian/exponential
// transforms.  Standard-library distributions are implementation-defined, so
// everything here is hand-rolled to keep ensemble outputs byte-identical
// across toolchains and across worker counts.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Counter-based stream derivation: realization k of a run draws from the
// stream seeded by derive_seed(master_seed, k), so the partition of
// realizations over workers cannot change any stream.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t counter) {
  std::uint64_t s = master_seed ^ (counter * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull);
  std::uint64_t a = splitmix64(s);
  std::uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // xoshiro256++ must not be seeded all-zero; splitmix64 expansion avoids that.
    std::uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64(sm);
    cached_valid_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on [0,1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1]: safe as a log() argument.
  double uniform_pos() { return 1.0 - uniform(); }

  // Standard normal via the polar (Marsaglia) method; the spare deviate is
  // cached, so draws come in a deterministic per-stream order.
  double gaussian() {
    if (cached_valid_) {
      cached_valid_ = false;
      return cached_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    cached_ = v * f;
    cached_valid_ = true;
    return u * f;
  }

  // Exponential with the given mean.
  double exponential(double mean) { return -mean * std::log(uniform_pos()); }

  // Exact Poisson sampling by counting unit-exponential arrivals; O(mean)
  // draws, deterministic, no large-mean approximation.
  std::uint64_t poisson(double mean) {
    std::uint64_t k = 0;
    double acc = exponential(1.0);
    while (acc < mean) {
      ++k;
      acc += exponential(1.0);
    }
    return k;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t s_[4];
  double cached_ = 0.0;
  bool cached_valid_ = false;
};

}  // namespace spinbath
