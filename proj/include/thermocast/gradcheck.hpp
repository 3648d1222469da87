#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "thermocast/tape.hpp"

namespace thermocast {

/// Builds a scalar loss from tape-bound inputs.
using LossGraph = std::function<Var(GradTape& tape, std::span<const Var> inputs)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Location of the worst element.
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  /// Elements whose check failed at `eps` but passed with a step 100x
  /// smaller: the step straddles a non-differentiable point (a ReLU or
  /// max-pool kink), so the finite difference is not a valid oracle there.
  /// A wrong backward rule cannot pass this way.
  std::size_t kinks = 0;
  /// Worst error over the elements that are not kinks.
  double max_smooth_error = 0.0;
};

/// Compares tape gradients against central finite differences. The numeric
/// side only ever runs forward passes. Relative error per element is
/// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from
/// turning rounding noise into huge ratios.
GradCheckResult check_gradients(const LossGraph& graph, const std::vector<Tensor>& inputs, double eps = 1e-5,
                                double floor = 1e-6, double tolerance = 1e-4);

/// sum(x * R) for a fixed pseudo-random R in [-1, 1]; turns any output into
/// a scalar loss that weights every element differently.
Var random_projection(const Var& x, std::uint64_t seed);

/// Tensor with entries uniform in [lo, hi], deterministic per seed.
Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

}  // namespace thermocast
