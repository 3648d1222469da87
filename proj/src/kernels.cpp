#include "thermocast/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace thermocast::kernels {

namespace {

constexpr std::size_t kRowTile = 64;
constexpr std::size_t kColTile = 256;
constexpr std::size_t kDepthTile = 256;
// Register tile: kMicroRows rows of C by kPanel columns.
constexpr std::size_t kMicroRows = 8;
constexpr std::size_t kPanel = 16;
// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 16;
constexpr std::size_t kParallelElems = 1u << 15;

using v8d = double __attribute__((vector_size(64)));

inline v8d load8(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store8(double* p, v8d v) { std::memcpy(p, &v, sizeof v); }

inline double load(Trans t, const double* m, std::size_t ld, std::size_t row, std::size_t col) {
  return t == Trans::No ? m[row * ld + col] : m[col * ld + row];
}

// Copies op(M) (rows x cols) into a contiguous row-major buffer.
std::vector<double> pack(Trans t, const double* m, std::size_t ld, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  if (t == Trans::No) {
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(m + r * ld, cols, out.data() + r * cols);
  } else {
    for (std::size_t c = 0; c < cols; ++c) {
      const double* src = m + c * ld;
      for (std::size_t r = 0; r < rows; ++r) out[r * cols + c] = src[r];
    }
  }
  return out;
}

// Rearranges op(B) (k x n) into column panels of width kPanel, zero padded:
// panel q holds rows 0..k-1 of columns [q*kPanel, (q+1)*kPanel) contiguously.
std::vector<double> pack_panels(Trans t, const double* b, std::size_t ld, std::size_t k, std::size_t n) {
  const std::size_t panels = (n + kPanel - 1) / kPanel;
  std::vector<double> out(panels * k * kPanel, 0.0);
  for (std::size_t q = 0; q < panels; ++q) {
    const std::size_t j0 = q * kPanel;
    const std::size_t width = std::min(kPanel, n - j0);
    double* dst = out.data() + q * k * kPanel;
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t j = 0; j < width; ++j) dst[p * kPanel + j] = load(t, b, ld, p, j0 + j);
    }
  }
  return out;
}

// C[rows x cols] continues its running sums over depth p = 0..depth-1.
// Accumulators start from C, so each element sums in plain ascending-k order.
template <std::size_t Rows>
void micro(std::size_t depth, const double* a, std::size_t lda, const double* panel, double* c, std::size_t ldc,
           std::size_t cols) {
  v8d acc[Rows][2];
  double edge[Rows][kPanel];
  const bool full = cols == kPanel;
  for (std::size_t r = 0; r < Rows; ++r) {
    const double* src = c + r * ldc;
    if (!full) {
      std::fill_n(edge[r], kPanel, 0.0);
      std::copy_n(src, cols, edge[r]);
      src = edge[r];
    }
    acc[r][0] = load8(src);
    acc[r][1] = load8(src + 8);
  }
  for (std::size_t p = 0; p < depth; ++p) {
    const v8d b0 = load8(panel + p * kPanel);
    const v8d b1 = load8(panel + p * kPanel + 8);
    for (std::size_t r = 0; r < Rows; ++r) {
      const double av = a[r * lda + p];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    double* dst = c + r * ldc;
    if (full) {
      store8(dst, acc[r][0]);
      store8(dst + 8, acc[r][1]);
    } else {
      store8(edge[r], acc[r][0]);
      store8(edge[r] + 8, acc[r][1]);
      std::copy_n(edge[r], cols, dst);
    }
  }
}

using MicroFn = void (*)(std::size_t, const double*, std::size_t, const double*, double*, std::size_t, std::size_t);

constexpr MicroFn kMicro[kMicroRows + 1] = {nullptr,     micro<1>, micro<2>, micro<3>, micro<4>,
                                            micro<5>,    micro<6>, micro<7>, micro<8>};

// One (row tile, column tile) block of C over the full depth.
void tile(std::size_t i0, std::size_t i1, std::size_t j0, std::size_t j1, std::size_t k, const double* a,
          std::size_t lda, const double* panels, double* c, std::size_t ldc) {
  for (std::size_t k0 = 0; k0 < k; k0 += kDepthTile) {
    const std::size_t depth = std::min(kDepthTile, k - k0);
    for (std::size_t j = j0; j < j1; j += kPanel) {
      const double* panel = panels + (j / kPanel) * k * kPanel + k0 * kPanel;
      const std::size_t cols = std::min(kPanel, j1 - j);
      for (std::size_t i = i0; i < i1; i += kMicroRows) {
        const std::size_t rows = std::min(kMicroRows, i1 - i);
        kMicro[rows](depth, a + i * lda + k0, lda, panel, c + i * ldc + j, ldc, cols);
      }
    }
  }
}

}  // namespace

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) std::fill_n(c + i * ldc, n, 0.0);
  }
  if (k == 0) return;

  std::vector<double> packed_a;
  if (trans_a == Trans::Yes) {
    packed_a = pack(trans_a, a, lda, m, k);
    a = packed_a.data();
    lda = k;
  }
  const std::vector<double> panels = pack_panels(trans_b, b, ldb, k, n);

  const std::size_t row_tiles = (m + kRowTile - 1) / kRowTile;
  const std::size_t col_tiles = (n + kColTile - 1) / kColTile;
  const std::size_t tiles = row_tiles * col_tiles;
  const bool parallel = m * n * k >= kParallelWork && tiles > 1;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::size_t t = 0; t < tiles; ++t) {
    const std::size_t i0 = (t % row_tiles) * kRowTile;
    const std::size_t j0 = (t / row_tiles) * kColTile;
    tile(i0, std::min(m, i0 + kRowTile), j0, std::min(n, j0 + kColTile), k, a, lda, panels.data(), c, ldc);
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
#pragma omp parallel for simd schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add(std::size_t n, const double* x, const double* y, double* out) {
#pragma omp parallel for simd schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
#pragma omp parallel for simd schedule(static) if (n >= kParallelElems)
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, threads));
#else
  (void)threads;
#endif
}

namespace serial {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = accumulate ? c[i * ldc + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) sum += load(trans_a, a, lda, i, p) * load(trans_b, b, ldb, p, j);
      c[i * ldc + j] = sum;
    }
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const double* x, const double* y, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

}  // namespace serial

}  // namespace thermocast::kernels
