#pragma once

#include <cstdint>
#include <random>

namespace inml {

// Seeded generator used by every randomized component ("mt64-v1"): the
// standard mt19937_64 engine seeded with the 64-bit seed, with bounded draws
// taken by rejection sampling on the raw 64-bit output. All of this is
// specified exactly, so another implementation can reproduce the stream.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt64-v1";

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, n); n >= 1.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  // Uniform in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace inml
