#include "thermocast/layers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <utility>
#include <vector>

#include "thermocast/errors.hpp"
#include "thermocast/kernels.hpp"
#include "thermocast/ops.hpp"

namespace thermocast {

namespace {

using kernels::Trans;

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(x.shape()));
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var conv1d(const Var& x, const Conv1DParams& p) {
  require_rank(x, 3, "conv1d");
  require_rank(p.kernels, 3, "conv1d kernels");
  const std::size_t batch = x.shape()[0], steps = x.shape()[1], in_ch = x.shape()[2];
  const std::size_t width = p.kernels.shape()[0], out_ch = p.kernels.shape()[2];
  if (p.kernels.shape()[1] != in_ch) {
    throw ShapeError("conv1d: kernels " + to_string(p.kernels.shape()) + " do not match input " +
                     to_string(x.shape()));
  }
  if (p.bias.shape() != Shape{out_ch}) {
    throw ShapeError("conv1d: bias " + to_string(p.bias.shape()) + " for " + std::to_string(out_ch) + " filters");
  }
  if (steps < width) {
    throw ShapeError("conv1d: input length " + std::to_string(steps) + " shorter than kernel " +
                     std::to_string(width));
  }
  const std::size_t out_steps = steps - width + 1;
  const std::size_t patch = width * in_ch;
  // The batch is treated as one long sequence: window r starts at row r and
  // spans `patch` contiguous values. Windows that straddle two samples are
  // computed and discarded.
  const std::size_t windows = batch * steps - width + 1;

  std::vector<double> full(windows * out_ch);
  kernels::gemm(Trans::No, Trans::No, windows, out_ch, patch, x.value().raw(), in_ch, p.kernels.value().raw(),
                out_ch, full.data(), out_ch, false);
  Tensor out({batch, out_steps, out_ch});
  const double* bias = p.bias.value().raw();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_steps; ++t) {
      const double* src = full.data() + (b * steps + t) * out_ch;
      double* dst = out.raw() + (b * out_steps + t) * out_ch;
      for (std::size_t o = 0; o < out_ch; ++o) dst[o] = src[o] + bias[o];
    }
  }

  return x.tape().record(
      std::move(out), {x, p.kernels, p.bias},
      [x, k = p.kernels, batch, steps, in_ch, out_ch, out_steps, patch, windows](const Tensor&, const Tensor& g,
                                                                                 auto gi) {
        std::vector<double> gfull(windows * out_ch, 0.0);
        for (std::size_t b = 0; b < batch; ++b) {
          std::copy_n(g.raw() + b * out_steps * out_ch, out_steps * out_ch, gfull.data() + b * steps * out_ch);
        }
        if (gi[0]) {
          std::vector<double> gpatch(windows * patch);
          kernels::gemm(Trans::No, Trans::Yes, windows, patch, out_ch, gfull.data(), out_ch, k.value().raw(),
                        out_ch, gpatch.data(), patch, false);
          double* dx = gi[0]->raw();
          for (std::size_t r = 0; r < windows; ++r) {
            kernels::serial::axpy(patch, 1.0, gpatch.data() + r * patch, dx + r * in_ch);
          }
        }
        if (gi[1]) {
          kernels::gemm(Trans::Yes, Trans::No, patch, out_ch, windows, x.value().raw(), in_ch, gfull.data(), out_ch,
                        gi[1]->raw(), out_ch, true);
        }
        if (gi[2]) {
          double* db = gi[2]->raw();
          for (std::size_t r = 0; r < batch * out_steps; ++r) {
            const double* row = g.raw() + r * out_ch;
            for (std::size_t o = 0; o < out_ch; ++o) db[o] += row[o];
          }
        }
      });
}

Var maxpool1d(const Var& x, std::size_t pool, std::size_t stride) {
  require_rank(x, 3, "maxpool1d");
  if (pool == 0 || stride == 0) throw ContractError("maxpool1d: pool and stride must be positive");
  const std::size_t batch = x.shape()[0], steps = x.shape()[1], ch = x.shape()[2];
  if (steps < pool) {
    throw ShapeError("maxpool1d: input length " + std::to_string(steps) + " shorter than pool " +
                     std::to_string(pool));
  }
  const std::size_t out_steps = (steps - pool) / stride + 1;
  Tensor out({batch, out_steps, ch});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  const double* src = x.value().raw();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < out_steps; ++t) {
      for (std::size_t c = 0; c < ch; ++c) {
        std::size_t best = (b * steps + t * stride) * ch + c;
        for (std::size_t w = 1; w < pool; ++w) {
          const std::size_t at = (b * steps + t * stride + w) * ch + c;
          if (src[at] > src[best]) best = at;
        }
        const std::size_t o = (b * out_steps + t) * ch + c;
        out[o] = src[best];
        (*argmax)[o] = best;
      }
    }
  }
  return x.tape().record(std::move(out), {x}, [argmax](const Tensor&, const Tensor& g, auto gi) {
    double* dx = gi[0]->raw();
    for (std::size_t o = 0; o < g.numel(); ++o) dx[(*argmax)[o]] += g[o];
  });
}

Var flatten(const Var& x) {
  require_rank(x, 3, "flatten");
  return reshape(x, {x.shape()[0], x.shape()[1] * x.shape()[2]});
}

Var repeat_vector(const Var& x, std::size_t n) {
  require_rank(x, 2, "repeat_vector");
  if (n < 1) throw ContractError("repeat_vector: repeat count must be at least 1");
  const std::size_t batch = x.shape()[0], width = x.shape()[1];
  Tensor out({batch, n, width});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < n; ++t) {
      std::copy_n(x.value().raw() + b * width, width, out.raw() + (b * n + t) * width);
    }
  }
  return x.tape().record(std::move(out), {x}, [batch, n, width](const Tensor&, const Tensor& g, auto gi) {
    double* dx = gi[0]->raw();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < n; ++t) {
        kernels::serial::axpy(width, 1.0, g.raw() + (b * n + t) * width, dx + b * width);
      }
    }
  });
}

namespace {

// Per-step quantities kept for backpropagation through time. All buffers are
// time-major: [T, B, ...].
struct LstmTrace {
  std::size_t batch = 0, steps = 0, units = 0;
  std::vector<double> gates;  // activated i, f, g, o: [T, B, 4H]
  std::vector<double> cells;  // c_t: [T, B, H]
  std::vector<double> cell_tanh;
  std::vector<double> hidden;  // h_t: [T, B, H]
};

}  // namespace

Var lstm_recurrence(const Var& input_projection, const Var& recurrent_weights, bool return_sequences) {
  require_rank(input_projection, 3, "lstm");
  require_rank(recurrent_weights, 2, "lstm recurrent weights");
  const std::size_t batch = input_projection.shape()[0], steps = input_projection.shape()[1];
  const std::size_t units = recurrent_weights.shape()[1];
  const std::size_t gates_w = 4 * units;
  if (recurrent_weights.shape()[0] != gates_w || input_projection.shape()[2] != gates_w) {
    throw ShapeError("lstm: recurrent weights " + to_string(recurrent_weights.shape()) +
                     " do not match gate pre-activations " + to_string(input_projection.shape()));
  }

  auto tr = std::make_shared<LstmTrace>();
  tr->batch = batch;
  tr->steps = steps;
  tr->units = units;
  tr->gates.resize(steps * batch * gates_w);
  tr->cells.resize(steps * batch * units);
  tr->cell_tanh.resize(steps * batch * units);
  tr->hidden.resize(steps * batch * units);

  const double* z = input_projection.value().raw();
  const double* u = recurrent_weights.value().raw();
  for (std::size_t t = 0; t < steps; ++t) {
    double* pre = tr->gates.data() + t * batch * gates_w;
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(z + (b * steps + t) * gates_w, gates_w, pre + b * gates_w);
    }
    if (t > 0) {
      const double* h_prev = tr->hidden.data() + (t - 1) * batch * units;
      kernels::gemm(Trans::No, Trans::Yes, batch, gates_w, units, h_prev, units, u, units, pre, gates_w, true);
    }
    for (std::size_t b = 0; b < batch; ++b) {
      double* gv = pre + b * gates_w;
      const std::size_t row = (t * batch + b) * units;
      const double* c_prev = t > 0 ? tr->cells.data() + ((t - 1) * batch + b) * units : nullptr;
      for (std::size_t j = 0; j < units; ++j) {
        const double i_g = sigmoid(gv[j]);
        const double f_g = sigmoid(gv[units + j]);
        const double c_g = std::tanh(gv[2 * units + j]);
        const double o_g = sigmoid(gv[3 * units + j]);
        gv[j] = i_g;
        gv[units + j] = f_g;
        gv[2 * units + j] = c_g;
        gv[3 * units + j] = o_g;
        const double c = (c_prev ? f_g * c_prev[j] : 0.0) + i_g * c_g;
        const double tc = std::tanh(c);
        tr->cells[row + j] = c;
        tr->cell_tanh[row + j] = tc;
        tr->hidden[row + j] = o_g * tc;
      }
    }
  }

  Tensor out = return_sequences ? Tensor({batch, steps, units}) : Tensor({batch, units});
  if (return_sequences) {
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t b = 0; b < batch; ++b) {
        std::copy_n(tr->hidden.data() + (t * batch + b) * units, units, out.raw() + (b * steps + t) * units);
      }
    }
  } else {
    std::copy_n(tr->hidden.data() + (steps - 1) * batch * units, batch * units, out.raw());
  }

  return input_projection.tape().record(
      std::move(out), {input_projection, recurrent_weights},
      [tr, recurrent_weights, return_sequences](const Tensor&, const Tensor& g, auto gi) {
        const std::size_t batch = tr->batch, steps = tr->steps, units = tr->units, gates_w = 4 * units;
        const double* u = recurrent_weights.value().raw();
        std::vector<double> dpre(steps * batch * gates_w);
        std::vector<double> dh_next(batch * units, 0.0);
        std::vector<double> dc_next(batch * units, 0.0);
        for (std::size_t t = steps; t-- > 0;) {
          double* dp = dpre.data() + t * batch * gates_w;
          for (std::size_t b = 0; b < batch; ++b) {
            const double* gv = tr->gates.data() + (t * batch + b) * gates_w;
            const std::size_t row = (t * batch + b) * units;
            const double* c_prev = t > 0 ? tr->cells.data() + ((t - 1) * batch + b) * units : nullptr;
            const double* g_out = nullptr;
            if (return_sequences) {
              g_out = g.raw() + (b * steps + t) * units;
            } else if (t == steps - 1) {
              g_out = g.raw() + b * units;
            }
            double* dpb = dp + b * gates_w;
            for (std::size_t j = 0; j < units; ++j) {
              const double i_g = gv[j], f_g = gv[units + j], c_g = gv[2 * units + j], o_g = gv[3 * units + j];
              const double tc = tr->cell_tanh[row + j];
              const double dh = (g_out ? g_out[j] : 0.0) + dh_next[b * units + j];
              const double dc = dc_next[b * units + j] + dh * o_g * (1.0 - tc * tc);
              const double cp = c_prev ? c_prev[j] : 0.0;
              dpb[j] = dc * c_g * i_g * (1.0 - i_g);
              dpb[units + j] = dc * cp * f_g * (1.0 - f_g);
              dpb[2 * units + j] = dc * i_g * (1.0 - c_g * c_g);
              dpb[3 * units + j] = dh * tc * o_g * (1.0 - o_g);
              dc_next[b * units + j] = dc * f_g;
            }
          }
          if (t > 0) {
            kernels::gemm(Trans::No, Trans::No, batch, units, gates_w, dp, gates_w, u, units, dh_next.data(), units,
                          false);
          }
        }
        const double fault = debug::gradient_fault() ? 1.001 : 1.0;
        if (gi[0]) {
          double* dz = gi[0]->raw();
          for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t b = 0; b < batch; ++b) {
              kernels::serial::axpy(gates_w, 1.0, dpre.data() + (t * batch + b) * gates_w,
                                    dz + (b * steps + t) * gates_w);
            }
          }
        }
        if (gi[1] && steps > 1) {
          // dU = sum_t dpre_t^T h_{t-1}, stacked over t = 1..T-1.
          std::vector<double> du(gates_w * units);
          kernels::gemm(Trans::Yes, Trans::No, gates_w, units, (steps - 1) * batch, dpre.data() + batch * gates_w,
                        gates_w, tr->hidden.data(), units, du.data(), units, false);
          kernels::axpy(du.size(), fault, du.data(), gi[1]->raw());
        }
      });
}

Var lstm(const Var& x, const LSTMParams& p, bool return_sequences) {
  require_rank(x, 3, "lstm");
  const std::size_t batch = x.shape()[0], steps = x.shape()[1], in_w = x.shape()[2];
  const Shape& w = p.input_weights.shape();
  if (w.size() != 2 || w[1] != in_w) {
    throw ShapeError("lstm: input weights " + to_string(w) + " do not match input " + to_string(x.shape()));
  }
  const Var flat = reshape(x, {batch * steps, in_w});
  const Var proj = add_bias(matmul(flat, transpose(p.input_weights)), p.bias);
  return lstm_recurrence(reshape(proj, {batch, steps, w[0]}), p.recurrent_weights, return_sequences);
}

Var bilstm(const Var& x, const LSTMParams& forward, const LSTMParams& backward) {
  if (forward.recurrent_weights.shape() != backward.recurrent_weights.shape()) {
    throw ShapeError("bilstm: direction widths differ, " + to_string(forward.recurrent_weights.shape()) + " vs " +
                     to_string(backward.recurrent_weights.shape()));
  }
  const Var fwd = lstm(x, forward, true);
  const Var bwd = reverse_time(lstm(reverse_time(x), backward, true));
  return concat_last(fwd, bwd);
}

Var dropout(const Var& x, double rate, Mode mode, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ContractError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (mode == Mode::Infer || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(x.value().numel());
  std::mt19937_64 rng(seed);
  for (double& m : *mask) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    m = u < rate ? 0.0 : keep_scale;
  }
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= (*mask)[i];
  return x.tape().record(std::move(out), {x}, [mask](const Tensor&, const Tensor& g, auto gi) {
    double* dx = gi[0]->raw();
    for (std::size_t i = 0; i < g.numel(); ++i) dx[i] += g[i] * (*mask)[i];
  });
}

AttentionOutput self_attention(const Var& x, const AttentionParams& p) {
  require_rank(x, 3, "self_attention");
  const std::size_t batch = x.shape()[0], steps = x.shape()[1], width = x.shape()[2];
  for (const Var* w : {&p.query, &p.key, &p.value}) {
    if (w->shape() != Shape{width, width}) {
      throw ShapeError("self_attention: projection " + to_string(w->shape()) + " for feature width " +
                       std::to_string(width));
    }
  }
  const Var flat = reshape(x, {batch * steps, width});
  auto project = [&](const Var& w) { return reshape(matmul(flat, w), {batch, steps, width}); };
  const Var q = project(p.query);
  const Var k = project(p.key);
  const Var v = project(p.value);
  const Var scores = scale(bmm(q, swap_last_axes(k)), 1.0 / std::sqrt(static_cast<double>(width)));
  const Var weights = softmax(scores, 2);
  return AttentionOutput{bmm(weights, v), weights.value()};
}

Var dense(const Var& x, const DenseParams& p, Activation activation) {
  const Shape& shape = x.shape();
  const Shape& w = p.weights.shape();
  if (shape.empty() || w.size() != 2 || w[0] != shape.back()) {
    throw ShapeError("dense: weights " + to_string(w) + " do not match input " + to_string(shape));
  }
  const std::size_t rows = x.value().numel() / w[0];
  Var y = add_bias(matmul(reshape(x, {rows, w[0]}), p.weights), p.bias);
  if (activation == Activation::Relu) y = relu(y);
  Shape out_shape = shape;
  out_shape.back() = w[1];
  return reshape(y, std::move(out_shape));
}

}  // namespace thermocast
