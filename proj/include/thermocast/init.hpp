#pragma once

#include <cstdint>
#include <random>

#include "thermocast/tensor.hpp"

namespace thermocast {

/// Seeded source for parameter initialization. Uniform draws use the top 53
/// bits of the engine output so sequences do not depend on the standard
/// library's distribution implementations.
class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi);

 private:
  std::mt19937_64 engine_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, InitRng& rng);

/// [4H] zeros with the forget-gate block set to `forget_bias`.
Tensor lstm_bias(std::size_t units, double forget_bias = 1.0);

}  // namespace thermocast
