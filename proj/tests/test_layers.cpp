#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "thermocast/errors.hpp"
#include "thermocast/gradcheck.hpp"
#include "thermocast/layers.hpp"
#include "thermocast/ops.hpp"

using namespace thermocast;

namespace {

// Entries are multiples of 1/8 in [-2, 2]: products and short sums of them
// are exact in double precision, so results compare with == regardless of
// summation order.
Tensor dyadic(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  for (double& v : t.data()) v = static_cast<double>(static_cast<int>(rng() % 33) - 16) / 8.0;
  return t;
}

LSTMParams lstm_params(GradTape& tape, std::size_t in, std::size_t units, std::uint64_t seed) {
  return {tape.constant(random_tensor({4 * units, in}, seed, -0.5, 0.5)),
          tape.constant(random_tensor({4 * units, units}, seed + 1, -0.5, 0.5)),
          tape.constant(random_tensor({4 * units}, seed + 2, -0.5, 0.5))};
}

}  // namespace

TEST(Conv1D, DefaultShape) {
  GradTape tape;
  const Var y = conv1d(tape.constant(random_tensor({1, 30, 1}, 1)),
                       {tape.constant(random_tensor({2, 1, 256}, 2)), tape.constant(Tensor({256}))});
  EXPECT_EQ(y.shape(), (Shape{1, 29, 256}));
}

TEST(Conv1D, SlidingSum) {
  GradTape tape;
  const Var y = conv1d(tape.constant(Tensor::from({1, 3, 1}, {1, 2, 3})),
                       {tape.constant(Tensor({2, 1, 1}, 1.0)), tape.constant(Tensor({1}))});
  EXPECT_EQ(y.value(), Tensor::from({1, 2, 1}, {3, 5}));
}

TEST(Conv1D, MatchesBruteForceCorrelation) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::size_t batch = 1 + seed % 3, steps = 5, cin = 2, width = 2, cout = 3;
    const Tensor x = dyadic({batch, steps, cin}, seed), k = dyadic({width, cin, cout}, seed + 50),
                 b = dyadic({cout}, seed + 99);
    GradTape tape;
    const Tensor y = conv1d(tape.constant(x), {tape.constant(k), tape.constant(b)}).value();
    ASSERT_EQ(y.shape(), (Shape{batch, steps - width + 1, cout}));
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t t = 0; t + width <= steps; ++t)
        for (std::size_t o = 0; o < cout; ++o) {
          double acc = b[o];
          for (std::size_t j = 0; j < width; ++j)
            for (std::size_t c = 0; c < cin; ++c) acc += x.at({n, t + j, c}) * k.at({j, c, o});
          EXPECT_EQ(y.at({n, t, o}), acc);
        }
  }
}

TEST(Conv1D, Errors) {
  GradTape tape;
  const Var k = tape.constant(Tensor({3, 1, 2}));
  const Var b = tape.constant(Tensor({2}));
  EXPECT_THROW(conv1d(tape.constant(Tensor({1, 2, 1})), {k, b}), ShapeError);
  EXPECT_THROW(conv1d(tape.constant(Tensor({1, 5, 2})), {k, b}), ShapeError);
}

TEST(MaxPool, WindowMaxima) {
  GradTape tape;
  const Var y = maxpool1d(tape.constant(Tensor::from({1, 4, 1}, {1, 3, 2, 5})));
  EXPECT_EQ(y.value(), Tensor::from({1, 2, 1}, {3, 5}));
  EXPECT_EQ(maxpool1d(tape.constant(Tensor({2, 28, 128}))).shape(), (Shape{2, 14, 128}));
  EXPECT_THROW(maxpool1d(tape.constant(Tensor({1, 1, 3}))), ShapeError);
}

TEST(MaxPool, OddLengthMatchesBruteForce) {
  const Tensor x = random_tensor({2, 29, 3}, 4);
  GradTape tape;
  const Tensor y = maxpool1d(tape.constant(x)).value();
  ASSERT_EQ(y.shape(), (Shape{2, 14, 3}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t t = 0; t < 14; ++t)
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(y.at({n, t, c}), std::max(x.at({n, 2 * t, c}), x.at({n, 2 * t + 1, c})));
      }
}

TEST(Flatten, ShapesAndRoundTrip) {
  GradTape tape;
  const Tensor x = random_tensor({1, 14, 128}, 5);
  const Var f = flatten(tape.constant(x));
  EXPECT_EQ(f.shape(), (Shape{1, 1792}));
  EXPECT_EQ(reshape(f, {1, 14, 128}).value(), x);
  EXPECT_EQ(flatten(tape.constant(Tensor({1, 1, 1}, 7.0))).value(), Tensor({1, 1}, 7.0));
}

TEST(RepeatVector, ShapesAndValues) {
  GradTape tape;
  EXPECT_EQ(repeat_vector(tape.constant(Tensor({1, 1792})), 30).shape(), (Shape{1, 30, 1792}));
  const Tensor x = random_tensor({2, 3}, 6);
  const Var once = repeat_vector(tape.constant(x), 1);
  EXPECT_EQ(once.value(), x.reshaped({2, 1, 3}));
  EXPECT_THROW(repeat_vector(tape.constant(x), 0), ContractError);
}

TEST(RepeatVector, GradientOfSumIsRepeatCount) {
  GradTape tape;
  const Var x = tape.parameter(random_tensor({2, 4}, 7));
  const Tensor g = tape.backward(sum(repeat_vector(x, 5))).of(x);
  for (double v : g.data()) EXPECT_EQ(v, 5.0);
}

TEST(LSTM, ZeroWeightsGiveZeroOutput) {
  GradTape tape;
  const LSTMParams p{tape.constant(Tensor({8, 3})), tape.constant(Tensor({8, 2})), tape.constant(Tensor({8}))};
  const Tensor y = lstm(tape.constant(random_tensor({2, 4, 3}, 1)), p, true).value();
  EXPECT_EQ(y, Tensor({2, 4, 2}));
}

TEST(LSTM, DefaultShape) {
  GradTape tape;
  const Var y = lstm(tape.constant(random_tensor({1, 30, 1792}, 2)), lstm_params(tape, 1792, 100, 3), true);
  EXPECT_EQ(y.shape(), (Shape{1, 30, 100}));
  EXPECT_EQ(lstm(tape.constant(Tensor({2, 5, 3})), lstm_params(tape, 3, 4, 1), false).shape(), (Shape{2, 4}));
}

TEST(LSTM, ScalarRecurrenceByHand) {
  // Gate order input, forget, cell, output; values worked through the cell
  // equations step by step in extended precision.
  GradTape tape;
  const LSTMParams p{tape.constant(Tensor::from({4, 1}, {0.5, -0.3, 0.8, 0.1})),
                     tape.constant(Tensor::from({4, 1}, {0.2, 0.4, -0.6, 0.7})),
                     tape.constant(Tensor::from({4}, {0.1, 1.0, -0.2, 0.05}))};
  const Tensor h = lstm(tape.constant(Tensor::from({1, 2, 1}, {1.5, -0.5})), p, true).value();
  EXPECT_NEAR(h[0], 0.26836759910865892709, 1e-12);
  EXPECT_NEAR(h[1], 0.059912577686378723961, 1e-12);
}

TEST(LSTM, WeightShapeMismatch) {
  GradTape tape;
  EXPECT_THROW(lstm(tape.constant(Tensor({1, 3, 5})), lstm_params(tape, 4, 2, 1), true), ShapeError);
}

TEST(BiLSTM, DefaultShapeAndZeroWeights) {
  GradTape tape;
  EXPECT_EQ(bilstm(tape.constant(random_tensor({1, 30, 100}, 1)), lstm_params(tape, 100, 128, 2),
                   lstm_params(tape, 100, 128, 5))
                .shape(),
            (Shape{1, 30, 256}));
  const LSTMParams z{tape.constant(Tensor({8, 3})), tape.constant(Tensor({8, 2})), tape.constant(Tensor({8}))};
  EXPECT_EQ(bilstm(tape.constant(random_tensor({2, 3, 3}, 6)), z, z).value(), Tensor({2, 3, 4}));
  EXPECT_THROW(bilstm(tape.constant(Tensor({1, 3, 3})), lstm_params(tape, 3, 2, 1), lstm_params(tape, 3, 3, 4)),
               ShapeError);
}

TEST(BiLSTM, TimeReversalSwapsHalves) {
  GradTape tape;
  const LSTMParams p = lstm_params(tape, 2, 3, 11);
  const Tensor x = random_tensor({1, 3, 2}, 12);
  Tensor xr({1, 3, 2});
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 2; ++c) xr.at({0, t, c}) = x.at({0, 2 - t, c});
  const Tensor y = bilstm(tape.constant(x), p, p).value();
  const Tensor yr = bilstm(tape.constant(xr), p, p).value();
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t h = 0; h < 3; ++h) {
      EXPECT_EQ(yr.at({0, t, h}), y.at({0, 2 - t, 3 + h}));
      EXPECT_EQ(yr.at({0, t, 3 + h}), y.at({0, 2 - t, h}));
    }
}

TEST(Dropout, InferenceAndZeroRateAreIdentity) {
  GradTape tape;
  const Var x = tape.constant(random_tensor({4, 5}, 3));
  EXPECT_EQ(dropout(x, 0.3, Mode::Infer, 1).value(), x.value());
  EXPECT_EQ(dropout(x, 0.0, Mode::Train, 1).value(), x.value());
  EXPECT_EQ(dropout(x, 0.0, Mode::Infer, 1).value(), x.value());
  EXPECT_THROW(dropout(x, 1.0, Mode::Train, 1), ContractError);
  EXPECT_THROW(dropout(x, -0.1, Mode::Train, 1), ContractError);
}

TEST(Dropout, TrainStatistics) {
  const std::size_t n = 100000;
  GradTape tape;
  const Tensor x = random_tensor({n}, 8, 0.5, 1.5);
  const Tensor y = dropout(tape.constant(x), 0.3, Mode::Train, 1234).value();
  std::size_t zeros = 0;
  double in_mean = 0.0, out_mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (y[i] == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(y[i], x[i] / 0.7, 1e-15);
    }
    in_mean += x[i];
    out_mean += y[i];
  }
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.3, 0.01);
  EXPECT_NEAR(out_mean / in_mean, 1.0, 0.02);
}

TEST(Dropout, MaskDependsOnSeedOnly) {
  GradTape tape;
  const Var x = tape.constant(Tensor({50}, 1.0));
  EXPECT_EQ(dropout(x, 0.5, Mode::Train, 9).value(), dropout(x, 0.5, Mode::Train, 9).value());
  EXPECT_NE(dropout(x, 0.5, Mode::Train, 9).value(), dropout(x, 0.5, Mode::Train, 10).value());
}

TEST(SelfAttention, RowsAreStochastic) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    GradTape tape;
    const AttentionOutput a =
        self_attention(tape.constant(random_tensor({2, 5, 4}, seed, -3, 3)),
                       {tape.constant(random_tensor({4, 4}, seed + 1)), tape.constant(random_tensor({4, 4}, seed + 2)),
                        tape.constant(random_tensor({4, 4}, seed + 3))});
    ASSERT_EQ(a.weights.shape(), (Shape{2, 5, 5}));
    EXPECT_EQ(a.output.shape(), (Shape{2, 5, 4}));
    for (std::size_t r = 0; r < 10; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < 5; ++j) total += a.weights[r * 5 + j];
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(SelfAttention, ZeroQueryKeyGivesUniformMean) {
  GradTape tape;
  const Tensor x = random_tensor({1, 4, 3}, 5);
  const Tensor wv = random_tensor({3, 3}, 6);
  const AttentionOutput a = self_attention(
      tape.constant(x), {tape.constant(Tensor({3, 3})), tape.constant(Tensor({3, 3})), tape.constant(wv)});
  for (double w : a.weights.data()) EXPECT_DOUBLE_EQ(w, 0.25);
  for (std::size_t d = 0; d < 3; ++d) {
    double mean_v = 0.0;
    for (std::size_t t = 0; t < 4; ++t)
      for (std::size_t c = 0; c < 3; ++c) mean_v += x.at({0, t, c}) * wv.at({c, d}) / 4.0;
    for (std::size_t t = 0; t < 4; ++t) EXPECT_NEAR(a.output.value().at({0, t, d}), mean_v, 1e-15);
  }
}

TEST(SelfAttention, TwoStepScalarByHand) {
  GradTape tape;
  const AttentionOutput a = self_attention(
      tape.constant(Tensor::from({1, 2, 1}, {1, -2})),
      {tape.constant(Tensor::from({1, 1}, {0.7})), tape.constant(Tensor::from({1, 1}, {1.3})),
       tape.constant(Tensor::from({1, 1}, {-0.4}))});
  EXPECT_NEAR(a.output.value()[0], -0.32652860461611039439, 1e-12);
  EXPECT_NEAR(a.output.value()[1], 0.79491735243098789131, 1e-12);
  EXPECT_NEAR(a.weights[0], 0.93877383718009199532, 1e-12);
  EXPECT_NEAR(a.weights[2], 0.0042355396408434239091, 1e-12);
}

TEST(Dense, ShapesIdentityAndOracle) {
  GradTape tape;
  EXPECT_EQ(dense(tape.constant(Tensor({1, 30, 256})), {tape.constant(Tensor({256, 100})), tape.constant(Tensor({100}))},
                  Activation::Relu)
                .shape(),
            (Shape{1, 30, 100}));

  const Tensor x = random_tensor({2, 3}, 1);
  const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(dense(tape.constant(x), {tape.constant(eye), tape.constant(Tensor({3}))}, Activation::Linear).value(), x);

  const Tensor xd = dyadic({2, 3}, 2), w = dyadic({3, 2}, 3), b = dyadic({2}, 4);
  const Tensor y = dense(tape.constant(xd), {tape.constant(w), tape.constant(b)}, Activation::Linear).value();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 3; ++k) acc += xd.at({i, k}) * w.at({k, j});
      EXPECT_EQ(y.at({i, j}), acc + b[j]);
    }
  EXPECT_THROW(dense(tape.constant(Tensor({2, 4})), {tape.constant(w), tape.constant(b)}, Activation::Linear),
               ShapeError);
}
