#include "thermocast/check.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <ostream>
#include <random>
#include <sstream>

#include "thermocast/datapipe.hpp"
#include "thermocast/errors.hpp"
#include "thermocast/io.hpp"
#include "thermocast/layers.hpp"
#include "thermocast/ops.hpp"
#include "thermocast/optim.hpp"

namespace thermocast {

namespace {

using Inputs = std::span<const Var>;

GradientCase unary(std::string name, Shape shape, Var (*op)(const Var&)) {
  return {std::move(name), {shape}, [op](GradTape&, Inputs in, std::uint64_t s) {
            return random_projection(op(in[0]), s);
          }};
}

GradientCase binary(std::string name, Shape a, Shape b, Var (*op)(const Var&, const Var&)) {
  return {std::move(name), {a, b}, [op](GradTape&, Inputs in, std::uint64_t s) {
            return random_projection(op(in[0], in[1]), s);
          }};
}

}  // namespace

std::vector<GradientCase> layer_gradient_cases() {
  std::vector<GradientCase> cases;
  cases.push_back(binary("add", {3, 4}, {3, 4}, add));
  cases.push_back(binary("sub", {3, 4}, {3, 4}, sub));
  cases.push_back(binary("mul", {3, 4}, {3, 4}, mul));
  cases.push_back(binary("mul_scalar", {}, {2, 3}, mul));
  cases.push_back(unary("sigmoid", {2, 5}, sigmoid));
  cases.push_back(unary("tanh", {2, 5}, tanh));
  cases.push_back(unary("relu", {2, 5}, relu));
  cases.push_back({"scale", {{3, 2}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(scale(in[0], -1.7), s);
                   }});
  cases.push_back(binary("matmul", {3, 4}, {4, 2}, matmul));
  cases.push_back(unary("transpose", {3, 4}, transpose));
  cases.push_back(binary("bmm", {2, 3, 4}, {2, 4, 5}, bmm));
  cases.push_back(unary("swap_last_axes", {2, 3, 4}, swap_last_axes));
  for (std::size_t axis = 0; axis < 3; ++axis) {
    cases.push_back({"softmax_axis" + std::to_string(axis), {{2, 3, 4}},
                     [axis](GradTape&, Inputs in, std::uint64_t s) {
                       return random_projection(softmax(in[0], axis), s);
                     }});
  }
  cases.push_back({"sum", {{3, 3}}, [](GradTape&, Inputs in, std::uint64_t) { return scale(sum(in[0]), 0.5); }});
  cases.push_back({"mean_of_squares", {{3, 3}}, [](GradTape&, Inputs in, std::uint64_t) {
                     return mean(mul(in[0], in[0]));
                   }});
  cases.push_back({"reshape", {{2, 6}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(reshape(in[0], {3, 2, 2}), s);
                   }});
  cases.push_back(binary("add_bias", {2, 3, 4}, {4}, add_bias));
  cases.push_back(binary("concat_last", {2, 3, 2}, {2, 3, 4}, concat_last));
  cases.push_back(unary("reverse_time", {2, 4, 3}, reverse_time));
  cases.push_back({"select_step", {{2, 4, 3}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(select_step(in[0], 2), s);
                   }});
  cases.push_back({"mse_loss", {{4, 1}, {4, 1}}, [](GradTape&, Inputs in, std::uint64_t) {
                     return mse_loss(in[0], in[1]);
                   }});

  cases.push_back({"conv1d", {{2, 5, 3}, {2, 3, 4}, {4}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(conv1d(in[0], {in[1], in[2]}), s);
                   }});
  cases.push_back({"conv1d_k3", {{1, 5, 2}, {3, 2, 3}, {3}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(conv1d(in[0], {in[1], in[2]}), s);
                   }});
  cases.push_back({"maxpool1d", {{2, 5, 3}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(maxpool1d(in[0], 2, 2), s);
                   }});
  cases.push_back(unary("flatten", {2, 3, 4}, flatten));
  cases.push_back({"repeat_vector", {{2, 4}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(repeat_vector(in[0], 3), s);
                   }});
  for (const bool seq : {true, false}) {
    cases.push_back({seq ? "lstm_sequences" : "lstm_last", {{2, 4, 3}, {8, 3}, {8, 2}, {8}},
                     [seq](GradTape&, Inputs in, std::uint64_t s) {
                       return random_projection(lstm(in[0], {in[1], in[2], in[3]}, seq), s);
                     }});
  }
  cases.push_back({"lstm_recurrence", {{2, 4, 12}, {12, 3}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(lstm_recurrence(in[0], in[1], true), s);
                   }});
  cases.push_back({"bilstm", {{2, 4, 3}, {8, 3}, {8, 2}, {8}, {8, 3}, {8, 2}, {8}},
                   [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(bilstm(in[0], {in[1], in[2], in[3]}, {in[4], in[5], in[6]}), s);
                   }});
  cases.push_back({"dropout_train", {{3, 5}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(dropout(in[0], 0.3, Mode::Train, s), s);
                   }});
  cases.push_back({"self_attention", {{2, 4, 3}, {3, 3}, {3, 3}, {3, 3}}, [](GradTape&, Inputs in, std::uint64_t s) {
                     return random_projection(self_attention(in[0], {in[1], in[2], in[3]}).output, s);
                   }});
  for (const Activation act : {Activation::Linear, Activation::Relu}) {
    cases.push_back({act == Activation::Relu ? "dense_relu" : "dense_linear", {{2, 3, 4}, {4, 3}, {3}},
                     [act](GradTape&, Inputs in, std::uint64_t s) {
                       return random_projection(dense(in[0], {in[1], in[2]}, act), s);
                     }});
  }
  return cases;
}

GradientCase miniature_model_case(const ModelConfig& cfg, bool factor_repeat) {
  auto model = std::make_shared<Model>(Model::build(cfg, 1));
  GradientCase c;
  c.name = factor_repeat ? "miniature_model" : "miniature_model_literal_repeat";
  for (const NamedTensor& p : model->parameters()) c.input_shapes.push_back(p.value.shape());
  c.input_shapes.push_back({2, cfg.window, 1});
  c.graph = [model, factor_repeat](GradTape&, Inputs in, std::uint64_t s) {
    ForwardOptions opts;
    opts.mode = Mode::Train;
    opts.dropout_seed = s;
    opts.factor_repeat = factor_repeat;
    const std::size_t n = model->parameters().size();
    const ForwardResult r = model->forward(in.subspan(0, n), in[n], opts);
    return random_projection(r.output, s);
  };
  c.lo = -0.8;
  c.hi = 0.8;
  return c;
}

GradCheckResult run_gradient_case(const GradientCase& c, std::uint64_t seed, double tolerance) {
  std::vector<Tensor> inputs;
  inputs.reserve(c.input_shapes.size());
  for (std::size_t i = 0; i < c.input_shapes.size(); ++i) {
    inputs.push_back(random_tensor(c.input_shapes[i], seed * 1000003 + i, c.lo, c.hi));
  }
  const auto& graph = c.graph;
  return check_gradients([&graph, seed](GradTape& t, Inputs in) { return graph(t, in, seed); }, inputs, 1e-5, 1e-6,
                         tolerance);
}

ShapeTrace reference_trace(std::size_t b) {
  return {
      {"Conv1D", {b, 29, 256}},       {"Conv1D", {b, 28, 128}},
      {"MaxPooling1D", {b, 14, 128}}, {"Flatten", {b, 1792}},
      {"RepeatVector", {b, 30, 1792}}, {"LSTM", {b, 30, 100}},
      {"Dropout", {b, 30, 100}},      {"LSTM", {b, 30, 100}},
      {"Dropout", {b, 30, 100}},      {"LSTM", {b, 30, 100}},
      {"Bidirectional LSTM", {b, 30, 256}}, {"Self-Attention", {b, 30, 256}},
      {"Dense", {b, 30, 100}},        {"Dense", {b, 1}},
  };
}

namespace {

CheckOutcome check_shape_trace() {
  CheckOutcome out{"shape trace", true, "", 0.0};
  try {
    const Model model = Model::build(ModelConfig{}, 42);
    const ShapeTrace want = reference_trace(1);
    const ShapeTrace& got = model.shape_trace();
    if (got != want) {
      out.passed = false;
      for (std::size_t i = 0; i < std::max(got.size(), want.size()); ++i) {
        if (i >= got.size() || i >= want.size() || !(got[i] == want[i])) {
          out.detail = "row " + std::to_string(i + 1) + " differs";
          break;
        }
      }
    } else {
      out.detail = std::to_string(got.size()) + " rows, " + std::to_string(model.parameter_count()) + " parameters";
    }
  } catch (const std::exception& e) {
    out.passed = false;
    out.detail = e.what();
  }
  return out;
}

CheckOutcome check_gradient_suite(std::string name, const std::vector<GradientCase>& cases, const CheckOptions& opts) {
  CheckOutcome out{std::move(name), true, "", 0.0};
  double worst = 0.0;
  std::string worst_case;
  std::size_t replaced = 0;
  bool short_of_seeds = false;
  for (const GradientCase& c : cases) {
    std::size_t accepted = 0;
    const std::size_t max_seed = 2 * opts.gradient_seeds + 10;
    for (std::size_t s = 1; accepted < opts.gradient_seeds && s <= max_seed; ++s) {
      const GradCheckResult r = run_gradient_case(c, s, opts.gradient_tolerance);
      const double err = r.kinks > 0 ? r.max_smooth_error : r.max_rel_error;
      if (err > worst) {
        worst = err;
        worst_case = c.name + " seed " + std::to_string(s);
      }
      if (r.kinks > 0) {
        ++replaced;
      } else {
        ++accepted;
      }
    }
    short_of_seeds = short_of_seeds || accepted < opts.gradient_seeds;
  }
  out.passed = worst < opts.gradient_tolerance && !short_of_seeds;
  std::ostringstream d;
  d << cases.size() << " cases x " << opts.gradient_seeds << " seeds, max rel error " << worst;
  if (!worst_case.empty()) d << " (" << worst_case << ")";
  if (replaced > 0) d << ", " << replaced << " kink-straddling instance(s) replaced";
  if (short_of_seeds) d << ", too few kink-free instances";
  out.detail = d.str();
  return out;
}

// Scalar NAdam written out step by step, independent of nadam_apply.
std::vector<double> nadam_transcript(const std::vector<double>& grads, double theta, double lr) {
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0, mu_prod = 1.0;
  std::vector<double> out;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const double t = static_cast<double>(i + 1);
    const double g = grads[i];
    const double mu_t = b1 * (1.0 - 0.5 * std::pow(0.96, t / 250.0));
    const double mu_next = b1 * (1.0 - 0.5 * std::pow(0.96, (t + 1.0) / 250.0));
    mu_prod *= mu_t;
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g * g;
    const double m_hat = mu_next * m / (1.0 - mu_prod * mu_next) + (1.0 - mu_t) * g / (1.0 - mu_prod);
    const double v_hat = v / (1.0 - std::pow(b2, t));
    theta -= lr * m_hat / (std::sqrt(v_hat) + eps);
    out.push_back(theta);
  }
  return out;
}

CheckOutcome check_nadam() {
  std::vector<double> grads;
  for (int t = 1; t <= 100; ++t) grads.push_back(std::sin(0.3 * t) + 0.25 * std::cos(1.7 * t));
  const std::vector<double> want = nadam_transcript(grads, 0.5, 0.01);

  NAdamState state;
  const NAdamConfig cfg;
  std::vector<Tensor> theta{Tensor::scalar(0.5)};
  double worst = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const std::vector<Tensor> g{Tensor::scalar(grads[i])};
    nadam_apply(state, cfg, theta, g, 0.01);
    worst = std::max(worst, std::abs(theta[0].item() - want[i]));
  }
  return {"nadam scalar oracle", worst <= 1e-12, "100 steps, max abs deviation " + format_double(worst), 0.0};
}

CheckOutcome check_scaler() {
  std::mt19937_64 rng(7);
  std::vector<double> x(1000);
  for (double& v : x) v = -40.0 + 140.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  const ScalerParams p = fit_scaler(x);
  const std::vector<double> back = unscale(scale(x, p), p);
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
  const bool endpoints = p.scale(p.min) == -1.0 && p.scale(p.max) == 1.0;
  return {"scaler round-trip", endpoints && worst < 1e-12,
          std::string(endpoints ? "endpoints exact" : "endpoints WRONG") + ", max round-trip error " + format_double(worst),
          0.0};
}

}  // namespace

std::vector<CheckOutcome> run_checks(const CheckOptions& opts, std::ostream& log) {
  struct FaultGuard {
    explicit FaultGuard(bool on) { debug::set_gradient_fault(on); }
    ~FaultGuard() { debug::set_gradient_fault(false); }
  } guard(opts.inject_gradient_fault);

  std::vector<std::function<CheckOutcome()>> checks{
      check_shape_trace,
      [&] { return check_gradient_suite("layer gradients", layer_gradient_cases(), opts); },
      [&] {
        return check_gradient_suite("miniature model gradients",
                                    {miniature_model_case(ModelConfig::miniature(), true),
                                     miniature_model_case(ModelConfig::miniature(), false)},
                                    opts);
      },
      check_nadam,
      check_scaler,
  };
  std::vector<CheckOutcome> results;
  for (const auto& run : checks) {
    const auto start = std::chrono::steady_clock::now();
    CheckOutcome r = run();
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << " [" << format_double(std::round(r.seconds * 100) / 100) << " s]\n";
    log.flush();
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace thermocast
