#pragma once

#include <cstdint>
#include <string_view>

namespace fpnseg {

// Counter-based generator: draw k of a stream is a pure function of
// (seed, k), so results never depend on call interleaving across streams.
// Child streams are keyed by (label, index) and ignore the parent counter.
class RngStream {
 public:
  explicit RngStream(uint64_t seed = 0, uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  uint64_t seed() const noexcept { return seed_; }
  uint64_t counter() const noexcept { return counter_; }

  uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Integer in [0, n).
  uint64_t below(uint64_t n);
  double normal();

  RngStream derive(std::string_view label, uint64_t index = 0) const;

 private:
  uint64_t seed_;
  uint64_t counter_;
};

uint64_t mix64(uint64_t x);

}  // namespace fpnseg
