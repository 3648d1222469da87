#pragma once

// Sequence-model layers on top of the tape primitives. Activations are laid
// out [batch, time, features]; the batch axis is always explicit.

#include <cstddef>
#include <cstdint>

#include "thermocast/tape.hpp"

namespace thermocast {

/// kernels: [K, C_in, C_out]; bias: [C_out].
struct Conv1DParams {
  Var kernels;
  Var bias;
};

/// Gate blocks are stacked in the order input, forget, cell, output.
/// input_weights: [4H, C_in]; recurrent_weights: [4H, H]; bias: [4H].
struct LSTMParams {
  Var input_weights;
  Var recurrent_weights;
  Var bias;
};

/// Square [D, D] projections.
struct AttentionParams {
  Var query;
  Var key;
  Var value;
};

/// weights: [D_in, D_out]; bias: [D_out].
struct DenseParams {
  Var weights;
  Var bias;
};

enum class Mode { Train, Infer };
enum class Activation { Linear, Relu };

/// Valid cross-correlation, stride 1, no padding: [B,T,C_in] -> [B,T-K+1,C_out].
/// The activation is applied separately.
Var conv1d(const Var& x, const Conv1DParams& p);

/// Non-overlapping window maxima: [B,T,C] -> [B,(T-pool)/stride+1,C].
Var maxpool1d(const Var& x, std::size_t pool = 2, std::size_t stride = 2);

/// [B,T,C] -> [B,T*C]
Var flatten(const Var& x);

/// [B,D] -> [B,n,D]
Var repeat_vector(const Var& x, std::size_t n);

/// Zero initial state. Returns [B,T,H] with return_sequences, else [B,H].
Var lstm(const Var& x, const LSTMParams& p, bool return_sequences);

/// The recurrent half of an LSTM given precomputed gate pre-activations
/// x*W^T + b laid out [B,T,4H]. lstm() is this applied to the projected input.
Var lstm_recurrence(const Var& input_projection, const Var& recurrent_weights, bool return_sequences);

/// Forward and time-reversed passes concatenated per step: [B,T,2H].
Var bilstm(const Var& x, const LSTMParams& forward, const LSTMParams& backward);

/// Inverted dropout. Identity in inference mode; in training each element is
/// zeroed with probability `rate` and survivors are scaled by 1/(1-rate).
Var dropout(const Var& x, double rate, Mode mode, std::uint64_t seed);

struct AttentionOutput {
  Var output;    // [B,T,D]
  Tensor weights;  // [B,T,T], rows sum to one
};

/// Single-head scaled dot-product self-attention.
AttentionOutput self_attention(const Var& x, const AttentionParams& p);

/// Affine map over the trailing axis, applied at every leading index.
Var dense(const Var& x, const DenseParams& p, Activation activation);

}  // namespace thermocast
