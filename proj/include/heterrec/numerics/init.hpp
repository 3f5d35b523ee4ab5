#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace heterrec::numerics {

// Seeded parameter initializer. Uses only the raw mt19937_64 stream so the
// values are identical across standard library implementations.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::vector<float> uniform(std::size_t n, double bound) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>((2.0 * uniform01() - 1.0) * bound);
    return v;
  }

  std::vector<float> xavier(std::size_t fan_in, std::size_t fan_out) {
    return uniform(fan_in * fan_out, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  }

  static std::vector<float> constant(std::size_t n, float value) { return std::vector<float>(n, value); }

 private:
  std::mt19937_64 rng_;
};

}  // namespace heterrec::numerics
