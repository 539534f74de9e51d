// SplitMix64 (Steele/Lea/Vigna). The output sequence is fully specified by
// the algorithm and the seed, independent of platform and standard library,
// which is the reproducibility contract the simulator documents.
#pragma once

#include <cstdint>

namespace evaudit {

class SplitMix64 {
public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1) with 53 random bits
  double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_unit() < p; }

private:
  std::uint64_t state_;
};

}  // namespace evaudit
