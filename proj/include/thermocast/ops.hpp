#pragma once

// Differentiable primitives. Every function records its result on the tape
// of its inputs. Binary ops need identical shapes, except that a rank-0
// scalar combines with any tensor.

#include <cstddef>

#include "thermocast/tape.hpp"

namespace thermocast {

enum class UnaryOp { Sigmoid, Tanh, Relu };
enum class BinaryOp { Add, Sub, Mul };

Var elementwise(UnaryOp op, const Var& x);
Var elementwise(BinaryOp op, const Var& a, const Var& b);

inline Var add(const Var& a, const Var& b) { return elementwise(BinaryOp::Add, a, b); }
inline Var sub(const Var& a, const Var& b) { return elementwise(BinaryOp::Sub, a, b); }
inline Var mul(const Var& a, const Var& b) { return elementwise(BinaryOp::Mul, a, b); }
inline Var sigmoid(const Var& x) { return elementwise(UnaryOp::Sigmoid, x); }
inline Var tanh(const Var& x) { return elementwise(UnaryOp::Tanh, x); }
inline Var relu(const Var& x) { return elementwise(UnaryOp::Relu, x); }

Var scale(const Var& x, double factor);

/// [M,K] x [K,N] -> [M,N]
Var matmul(const Var& a, const Var& b);
/// [M,N] -> [N,M]
Var transpose(const Var& a);
/// Batched product [B,M,K] x [B,K,N] -> [B,M,N].
Var bmm(const Var& a, const Var& b);
/// [B,M,N] -> [B,N,M]
Var swap_last_axes(const Var& x);

/// Softmax along `axis`, stabilized by subtracting the running maximum.
Var softmax(const Var& x, std::size_t axis);

/// Sum / mean of all elements, as a rank-0 scalar.
Var sum(const Var& x);
Var mean(const Var& x);

Var reshape(const Var& x, Shape shape);

/// x[..., D] + b[D] on every leading index.
Var add_bias(const Var& x, const Var& bias);

/// Concatenate along the last axis; leading dimensions must agree.
Var concat_last(const Var& a, const Var& b);

/// Reverse axis 1 of a tensor of rank >= 2 (time axis of [B,T,...]).
Var reverse_time(const Var& x);

/// x[:, step, :] of a [B,T,D] tensor -> [B,D].
Var select_step(const Var& x, std::size_t step);

namespace debug {

/// Fault injection for verification tooling: when enabled, the tanh and LSTM
/// backward rules scale their gradients by (1 + 1e-3). Never enable outside
/// tests of the checking machinery.
void set_gradient_fault(bool enabled);
bool gradient_fault();

}  // namespace debug

}  // namespace thermocast
