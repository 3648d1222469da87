#include "thermocast/init.hpp"

#include <cmath>

namespace thermocast {

double InitRng::uniform(double lo, double hi) {
  const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

Tensor glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, InitRng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor lstm_bias(std::size_t units, double forget_bias) {
  Tensor b({4 * units});
  for (std::size_t j = units; j < 2 * units; ++j) b[j] = forget_bias;
  return b;
}

}  // namespace thermocast
