#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "sr4ir/common.hpp"

namespace sr4ir {

// Counter-free deterministic RNG. Every consumer derives its own stream from
// (root seed, stream name[, index]); nothing ambient, nothing stateful across
// module boundaries, which is what makes checkpoint resume bit-exact.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t stream_seed(uint64_t root, std::string_view name) {
  uint64_t s = root ^ fnv1a(name);
  return splitmix64(s);
}

inline uint64_t stream_seed(uint64_t root, std::string_view name, uint64_t index) {
  uint64_t s = root ^ fnv1a(name);
  s = splitmix64(s) ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
  return splitmix64(s);
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // [0,1) with 53 random bits
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  uint32_t below(uint32_t n) { return n ? uint32_t(next_u64() % n) : 0; }

  bool bernoulli(double p) { return uniform() < p; }

  // Box-Muller; draws a fresh pair each call so the consumption pattern does
  // not depend on call parity.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  uint64_t state_;
};

}  // namespace sr4ir
