#include "thermocast/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <utility>

#include "thermocast/errors.hpp"
#include "thermocast/kernels.hpp"

namespace thermocast {

namespace debug {

namespace {
std::atomic<bool> g_gradient_fault{false};
}

void set_gradient_fault(bool enabled) { g_gradient_fault.store(enabled); }
bool gradient_fault() { return g_gradient_fault.load(); }

}  // namespace debug

namespace {

using kernels::Trans;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     to_string(x.shape()));
  }
}

void add_into(Tensor& dst, const Tensor& src) { kernels::axpy(dst.numel(), 1.0, src.raw(), dst.raw()); }

}  // namespace

Var elementwise(UnaryOp op, const Var& x) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  const std::size_t n = in.numel();
  const double* src = in.raw();
  double* dst = out.raw();
  switch (op) {
    case UnaryOp::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) dst[i] = stable_sigmoid(src[i]);
      break;
    case UnaryOp::Tanh:
      for (std::size_t i = 0; i < n; ++i) dst[i] = std::tanh(src[i]);
      break;
    case UnaryOp::Relu:
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0 ? src[i] : 0.0;
      break;
  }
  return x.tape().record(std::move(out), {x}, [op, x](const Tensor& y, const Tensor& g, auto gi) {
    Tensor& dx = *gi[0];
    const double* yv = y.raw();
    const double* xv = x.value().raw();
    const std::size_t len = g.numel();
    switch (op) {
      case UnaryOp::Sigmoid:
        for (std::size_t i = 0; i < len; ++i) dx[i] += g[i] * yv[i] * (1.0 - yv[i]);
        break;
      case UnaryOp::Tanh: {
        const double f = debug::gradient_fault() ? 1.001 : 1.0;
        for (std::size_t i = 0; i < len; ++i) dx[i] += f * g[i] * (1.0 - yv[i] * yv[i]);
        break;
      }
      case UnaryOp::Relu:
        for (std::size_t i = 0; i < len; ++i) dx[i] += xv[i] > 0.0 ? g[i] : 0.0;
        break;
    }
  });
}

Var elementwise(BinaryOp op, const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const bool a_scalar = av.rank() == 0 && bv.rank() != 0;
  const bool b_scalar = bv.rank() == 0 && av.rank() != 0;
  if (!a_scalar && !b_scalar && av.shape() != bv.shape()) {
    throw ShapeError("elementwise: shape mismatch " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  }
  const Shape shape = a_scalar ? bv.shape() : av.shape();
  const std::size_t n = numel(shape);
  Tensor out(shape);
  const std::size_t sa = a_scalar ? 0 : 1;
  const std::size_t sb = b_scalar ? 0 : 1;
  const double* x = av.raw();
  const double* y = bv.raw();
  double* z = out.raw();
  if (sa && sb && op == BinaryOp::Add) {
    kernels::add(n, x, y, z);
  } else if (sa && sb && op == BinaryOp::Mul) {
    kernels::mul(n, x, y, z);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double l = x[i * sa];
      const double r = y[i * sb];
      z[i] = op == BinaryOp::Add ? l + r : op == BinaryOp::Sub ? l - r : l * r;
    }
  }
  return a.tape().record(std::move(out), {a, b}, [op, a, b, sa, sb](const Tensor&, const Tensor& g, auto gi) {
    const std::size_t len = g.numel();
    const double* x = a.value().raw();
    const double* y = b.value().raw();
    if (Tensor* da = gi[0]) {
      double* d = da->raw();
      for (std::size_t i = 0; i < len; ++i) {
        const double local = op == BinaryOp::Mul ? y[i * sb] : 1.0;
        d[i * sa] += g[i] * local;
      }
    }
    if (Tensor* db = gi[1]) {
      double* d = db->raw();
      const double sign = op == BinaryOp::Sub ? -1.0 : 1.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double local = op == BinaryOp::Mul ? x[i * sa] : sign;
        d[i * sb] += g[i] * local;
      }
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = x.value();
  for (double& v : out.data()) v *= factor;
  return x.tape().record(std::move(out), {x}, [factor](const Tensor&, const Tensor& g, auto gi) {
    kernels::axpy(g.numel(), factor, g.raw(), gi[0]->raw());
  });
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ for " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor out({m, n});
  kernels::gemm(Trans::No, Trans::No, m, n, k, a.value().raw(), k, b.value().raw(), n, out.raw(), n, false);
  return a.tape().record(std::move(out), {a, b}, [a, b, m, n, k](const Tensor&, const Tensor& g, auto gi) {
    if (gi[0]) kernels::gemm(Trans::No, Trans::Yes, m, k, n, g.raw(), n, b.value().raw(), n, gi[0]->raw(), k, true);
    if (gi[1]) kernels::gemm(Trans::Yes, Trans::No, k, n, m, a.value().raw(), k, g.raw(), n, gi[1]->raw(), n, true);
  });
}

namespace {

void transpose_into(const double* src, double* dst, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

void transpose_add(const double* src, double* dst, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] += src[r * cols + c];
  }
}

}  // namespace

Var transpose(const Var& a) {
  require_rank(a, 2, "transpose");
  const std::size_t rows = a.shape()[0], cols = a.shape()[1];
  Tensor out({cols, rows});
  transpose_into(a.value().raw(), out.raw(), rows, cols);
  return a.tape().record(std::move(out), {a}, [rows, cols](const Tensor&, const Tensor& g, auto gi) {
    transpose_add(g.raw(), gi[0]->raw(), cols, rows);
  });
}

Var bmm(const Var& a, const Var& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t batch = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
  if (b.shape()[0] != batch || b.shape()[1] != k) {
    throw ShapeError("bmm: incompatible shapes " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  Tensor out({batch, m, n});
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm(Trans::No, Trans::No, m, n, k, a.value().raw() + i * m * k, k, b.value().raw() + i * k * n, n,
                  out.raw() + i * m * n, n, false);
  }
  return a.tape().record(std::move(out), {a, b}, [a, b, batch, m, n, k](const Tensor&, const Tensor& g, auto gi) {
    for (std::size_t i = 0; i < batch; ++i) {
      const double* gp = g.raw() + i * m * n;
      if (gi[0]) {
        kernels::gemm(Trans::No, Trans::Yes, m, k, n, gp, n, b.value().raw() + i * k * n, n,
                      gi[0]->raw() + i * m * k, k, true);
      }
      if (gi[1]) {
        kernels::gemm(Trans::Yes, Trans::No, k, n, m, a.value().raw() + i * m * k, k, gp, n,
                      gi[1]->raw() + i * k * n, n, true);
      }
    }
  });
}

Var swap_last_axes(const Var& x) {
  require_rank(x, 3, "swap_last_axes");
  const std::size_t batch = x.shape()[0], rows = x.shape()[1], cols = x.shape()[2];
  Tensor out({batch, cols, rows});
  for (std::size_t i = 0; i < batch; ++i) {
    transpose_into(x.value().raw() + i * rows * cols, out.raw() + i * rows * cols, rows, cols);
  }
  return x.tape().record(std::move(out), {x}, [batch, rows, cols](const Tensor&, const Tensor& g, auto gi) {
    for (std::size_t i = 0; i < batch; ++i) {
      transpose_add(g.raw() + i * rows * cols, gi[0]->raw() + i * rows * cols, cols, rows);
    }
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " + to_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t len = shape[axis];

  Tensor out(shape);
  const double* src = x.value().raw();
  double* dst = out.raw();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) peak = std::max(peak, src[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const double e = std::exp(src[base + i * inner] - peak);
        dst[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) dst[base + i * inner] /= total;
    }
  }
  return x.tape().record(std::move(out), {x}, [outer, inner, len](const Tensor& y, const Tensor& g, auto gi) {
    double* dx = gi[0]->raw();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t at = base + i * inner;
          dx[at] += y[at] * (g[at] - dot);
        }
      }
    }
  });
}

Var sum(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record(Tensor::scalar(total), {x}, [](const Tensor&, const Tensor& g, auto gi) {
    const double s = g[0];
    for (double& d : gi[0]->data()) d += s;
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().numel())); }

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](const Tensor&, const Tensor& g, auto gi) { add_into(*gi[0], g); });
}

Var add_bias(const Var& x, const Var& bias) {
  const Shape& shape = x.shape();
  if (bias.shape().size() != 1 || shape.empty() || shape.back() != bias.shape()[0]) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " does not match trailing axis of " +
                     to_string(shape));
  }
  const std::size_t width = bias.shape()[0];
  const std::size_t rows = x.value().numel() / width;
  Tensor out = x.value();
  const double* b = bias.value().raw();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.raw() + r * width;
    for (std::size_t j = 0; j < width; ++j) row[j] += b[j];
  }
  return x.tape().record(std::move(out), {x, bias}, [rows, width](const Tensor&, const Tensor& g, auto gi) {
    if (gi[0]) add_into(*gi[0], g);
    if (gi[1]) {
      double* db = gi[1]->raw();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* row = g.raw() + r * width;
        for (std::size_t j = 0; j < width; ++j) db[j] += row[j];
      }
    }
  });
}

Var concat_last(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.empty() || sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 1, sb.begin())) {
    throw ShapeError("concat_last: incompatible shapes " + to_string(sa) + " and " + to_string(sb));
  }
  const std::size_t wa = sa.back(), wb = sb.back();
  const std::size_t rows = a.value().numel() / wa;
  Shape shape = sa;
  shape.back() = wa + wb;
  Tensor out(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.value().raw() + r * wa, wa, out.raw() + r * (wa + wb));
    std::copy_n(b.value().raw() + r * wb, wb, out.raw() + r * (wa + wb) + wa);
  }
  return a.tape().record(std::move(out), {a, b}, [rows, wa, wb](const Tensor&, const Tensor& g, auto gi) {
    for (std::size_t r = 0; r < rows; ++r) {
      const double* src = g.raw() + r * (wa + wb);
      if (gi[0]) kernels::serial::axpy(wa, 1.0, src, gi[0]->raw() + r * wa);
      if (gi[1]) kernels::serial::axpy(wb, 1.0, src + wa, gi[1]->raw() + r * wb);
    }
  });
}

Var reverse_time(const Var& x) {
  const Shape& shape = x.shape();
  if (shape.size() < 2) throw ShapeError("reverse_time: need rank >= 2, got " + to_string(shape));
  const std::size_t batch = shape[0], steps = shape[1];
  const std::size_t width = x.value().numel() / (batch * steps);
  auto flip = [batch, steps, width](const double* src, double* dst, bool accumulate) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < steps; ++t) {
        const double* s = src + (b * steps + t) * width;
        double* d = dst + (b * steps + (steps - 1 - t)) * width;
        for (std::size_t j = 0; j < width; ++j) d[j] = accumulate ? d[j] + s[j] : s[j];
      }
    }
  };
  Tensor out(shape);
  flip(x.value().raw(), out.raw(), false);
  return x.tape().record(std::move(out), {x}, [flip](const Tensor&, const Tensor& g, auto gi) {
    flip(g.raw(), gi[0]->raw(), true);
  });
}

Var select_step(const Var& x, std::size_t step) {
  require_rank(x, 3, "select_step");
  const std::size_t batch = x.shape()[0], steps = x.shape()[1], width = x.shape()[2];
  if (step >= steps) {
    throw ShapeError("select_step: step " + std::to_string(step) + " outside " + to_string(x.shape()));
  }
  Tensor out({batch, width});
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(x.value().raw() + (b * steps + step) * width, width, out.raw() + b * width);
  }
  return x.tape().record(std::move(out), {x}, [batch, steps, width, step](const Tensor&, const Tensor& g, auto gi) {
    for (std::size_t b = 0; b < batch; ++b) {
      kernels::serial::axpy(width, 1.0, g.raw() + b * width, gi[0]->raw() + (b * steps + step) * width);
    }
  });
}

}  // namespace thermocast
