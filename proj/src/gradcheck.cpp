#include "thermocast/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "thermocast/ops.hpp"

namespace thermocast {

namespace {

double loss_at(const LossGraph& graph, const std::vector<Tensor>& inputs) {
  GradTape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  return graph(tape, vars).value().item();
}

}  // namespace

GradCheckResult check_gradients(const LossGraph& graph, const std::vector<Tensor>& inputs, double eps,
                                double floor, double tolerance) {
  GradTape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.parameter(t));
  const Var loss = graph(tape, vars);
  const Gradients grads = tape.backward(loss);

  GradCheckResult worst;
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = grads.of(vars[i]);
    for (std::size_t j = 0; j < inputs[i].numel(); ++j) {
      const double a = analytic[j];
      auto central = [&](double h) {
        const double orig = inputs[i][j];
        probe[i][j] = orig + h;
        const double up = loss_at(graph, probe);
        probe[i][j] = orig - h;
        const double down = loss_at(graph, probe);
        probe[i][j] = orig;
        return (up - down) / (2.0 * h);
      };
      auto rel_error = [&](double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}); };
      const double numeric = central(eps);
      const double rel = rel_error(numeric);
      const bool kink = rel >= tolerance && rel_error(central(eps / 100.0)) < tolerance;
      if (kink) {
        ++worst.kinks;
      } else {
        worst.max_smooth_error = std::max(worst.max_smooth_error, rel);
      }
      if (rel > worst.max_rel_error || (i == 0 && j == 0)) {
        const std::size_t kinks = worst.kinks;
        const double smooth = worst.max_smooth_error;
        worst = GradCheckResult{rel, i, j, a, numeric, kinks, smooth};
      }
    }
  }
  return worst;
}

Var random_projection(const Var& x, std::uint64_t seed) {
  Var weights = x.tape().constant(random_tensor(x.shape(), seed));
  return sum(mul(x, weights));
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo, double hi) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  for (double& v : t.data()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = lo + (hi - lo) * u;
  }
  return t;
}

}  // namespace thermocast
