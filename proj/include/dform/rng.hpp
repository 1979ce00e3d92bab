// Seeded xorshift64* generator used for every randomized corpus.
//
// The exact recurrence is part of the external contract (documented in the
// README) so that oracles in any language can regenerate the corpora:
//   x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27;  return x * 2685821657736338717
// uniform doubles are (x >> 11) * 2^-53.
#ifndef DFORM_RNG_HPP
#define DFORM_RNG_HPP

#include <cstdint>

namespace dform {

class Xorshift64 {
 public:
  explicit Xorshift64(uint64_t seed) : s_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  uint64_t next() {
    uint64_t x = s_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    s_ = x;
    return x * 2685821657736338717ull;
  }

  // Uniform in [0,1).
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  // Uniform in [-1,1).
  double sym() { return 2.0 * uniform() - 1.0; }

 private:
  uint64_t s_;
};

}  // namespace dform

#endif
