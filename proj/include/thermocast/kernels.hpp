#pragma once

// Dense numeric kernels. The functions in `kernels::` are the OpenMP-parallel
// production paths; `kernels::serial::` holds straightforward loop versions
// used as test oracles and benchmark baselines.
//
// Parallel kernels partition output elements across threads and never split
// a reduction, so results are bit-identical for any thread count.

#include <cstddef>

namespace thermocast::kernels {

enum class Trans { No, Yes };

/// C (m x n) = op(A) * op(B), or C += ... when `accumulate` is set.
/// op(A) is m x k: with Trans::No, A is stored m x k with leading dimension lda;
/// with Trans::Yes, A is stored k x m. Likewise for B (k x n).
void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

/// Elementwise helpers over flat arrays of length n.
void axpy(std::size_t n, double alpha, const double* x, double* y);  // y += alpha * x
void add(std::size_t n, const double* x, const double* y, double* out);
void mul(std::size_t n, const double* x, const double* y, double* out);

int max_threads();
void set_threads(int threads);

namespace serial {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c, std::size_t ldc, bool accumulate);

void axpy(std::size_t n, double alpha, const double* x, double* y);
void add(std::size_t n, const double* x, const double* y, double* out);
void mul(std::size_t n, const double* x, const double* y, double* out);

}  // namespace serial

}  // namespace thermocast::kernels
