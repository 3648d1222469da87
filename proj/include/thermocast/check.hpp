#pragma once

// Embedded verification suite behind `thermocast check`, also reused by the
// test binaries: the layer shape contract, finite-difference gradient checks,
// the optimizer recurrence and the scaler round-trip.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "thermocast/gradcheck.hpp"
#include "thermocast/model.hpp"

namespace thermocast {

/// A differentiable graph with fixed input shapes; the seed picks the random
/// output projection (and dropout mask, where present).
struct GradientCase {
  std::string name;
  std::vector<Shape> input_shapes;
  std::function<Var(GradTape&, std::span<const Var>, std::uint64_t seed)> graph;
  double lo = -1.0;
  double hi = 1.0;
};

/// Every primitive op and every layer on small shapes.
std::vector<GradientCase> layer_gradient_cases();

/// The whole miniature architecture, parameters and input together.
GradientCase miniature_model_case(const ModelConfig& cfg = ModelConfig::miniature(), bool factor_repeat = true);

/// Draws the inputs for `seed` and runs check_gradients.
GradCheckResult run_gradient_case(const GradientCase& c, std::uint64_t seed, double tolerance = 1e-4);

/// Reference per-layer output shapes for batch `b`, written out literally.
ShapeTrace reference_trace(std::size_t b);

struct CheckOptions {
  /// Kink-free random instances per gradient case; instances whose
  /// finite-difference step straddles a kink are replaced by further seeds.
  std::size_t gradient_seeds = 50;
  double gradient_tolerance = 1e-4;
  bool inject_gradient_fault = false;
};

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Runs every check, printing one line per check to `log` as it finishes.
std::vector<CheckOutcome> run_checks(const CheckOptions& opts, std::ostream& log);

}  // namespace thermocast
