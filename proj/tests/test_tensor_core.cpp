#include <gtest/gtest.h>

#include <cmath>

#include "thermocast/check.hpp"
#include "thermocast/errors.hpp"
#include "thermocast/gradcheck.hpp"
#include "thermocast/ops.hpp"

using namespace thermocast;

namespace {

Tensor eval(Var (*op)(const Var&), const Tensor& x) {
  GradTape tape;
  return op(tape.constant(x)).value();
}

}  // namespace

TEST(Tensor, ShapeAndDataAgree) {
  const Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.at({1, 2}), 1.5);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(Tensor().numel(), 1u);
}

TEST(Tensor, RowMajorIndexing) {
  const Tensor t = Tensor::from({2, 3}, {0, 1, 2, 3, 4, 5});
  EXPECT_EQ(t.at({1, 0}), 3.0);
  EXPECT_EQ(t.at({0, 2}), 2.0);
  EXPECT_THROW(t.at({2, 0}), ShapeError);
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  GradTape tape;
  const Tensor a = Tensor::from({2, 2}, {1.5, -2, 3, 0.25});
  const Var r = matmul(tape.constant(a), tape.constant(Tensor::from({2, 2}, {1, 0, 0, 1})));
  EXPECT_EQ(r.value(), a);
}

TEST(Matmul, ZerosGiveZeros) {
  GradTape tape;
  const Var r = matmul(tape.constant(Tensor({3, 4})), tape.constant(random_tensor({4, 2}, 3)));
  EXPECT_EQ(r.value(), Tensor({3, 2}));
}

TEST(Matmul, HandExpandedProduct) {
  GradTape tape;
  const Var r = matmul(tape.constant(Tensor::from({2, 2}, {1, 2, 3, 4})), tape.constant(Tensor::from({2, 1}, {5, 6})));
  EXPECT_EQ(r.value(), Tensor::from({2, 1}, {17, 39}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  GradTape tape;
  try {
    matmul(tape.constant(Tensor({2, 3})), tape.constant(Tensor({4, 2})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2, 3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4, 2)"), std::string::npos) << msg;
  }
}

TEST(Elementwise, ReferenceValues) {
  EXPECT_EQ(eval(relu, Tensor::from({3}, {-1, 0, 2})), Tensor::from({3}, {0, 0, 2}));
  EXPECT_EQ(eval(sigmoid, Tensor::from({1}, {0})).item(), 0.5);
  EXPECT_NEAR(eval(tanh, Tensor::from({1}, {0.5})).item(), 0.46211715726000975850, 1e-15);
}

TEST(Elementwise, BinaryShapesMustMatch) {
  GradTape tape;
  EXPECT_THROW(add(tape.constant(Tensor({2, 3})), tape.constant(Tensor({3, 2}))), ShapeError);
  EXPECT_THROW(mul(tape.constant(Tensor({2})), tape.constant(Tensor({2, 1}))), ShapeError);
  const Var s = mul(tape.constant(Tensor::scalar(2.0)), tape.constant(Tensor::from({2}, {1, 3})));
  EXPECT_EQ(s.value(), Tensor::from({2}, {2, 6}));
}

TEST(Elementwise, FiniteOnFiniteInputs) {
  GradTape tape;
  const Var x = tape.constant(Tensor::from({4}, {-800, -1, 1, 800}));
  EXPECT_TRUE(sigmoid(x).value().all_finite());
  EXPECT_TRUE(tanh(x).value().all_finite());
}

TEST(Softmax, ReferenceValues) {
  GradTape tape;
  const Tensor a = softmax(tape.constant(Tensor::from({2}, {0, 0})), 0).value();
  EXPECT_EQ(a, Tensor::from({2}, {0.5, 0.5}));
  const Tensor big = softmax(tape.constant(Tensor::from({2}, {1000, 1000})), 0).value();
  EXPECT_EQ(big, Tensor::from({2}, {0.5, 0.5}));
  const Tensor s = softmax(tape.constant(Tensor::from({3}, {1, 2, 3})), 0).value();
  EXPECT_NEAR(s[0], 0.090030573170380457998, 1e-15);
  EXPECT_NEAR(s[1], 0.24472847105479765247, 1e-15);
  EXPECT_NEAR(s[2], 0.66524095577482188953, 1e-15);
}

TEST(Softmax, RowsAreDistributions) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    GradTape tape;
    const Tensor s = softmax(tape.constant(random_tensor({3, 4, 5}, seed, -5, 5)), 2).value();
    for (std::size_t row = 0; row < 12; ++row) {
      double total = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        const double v = s[row * 5 + j];
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, InvalidAxis) {
  GradTape tape;
  EXPECT_THROW(softmax(tape.constant(Tensor({2, 2})), 2), ShapeError);
}

TEST(Backward, SquareAtThree) {
  GradTape tape;
  const Var x = tape.parameter(Tensor::scalar(3.0));
  const Gradients g = tape.backward(mul(x, x));
  EXPECT_EQ(g.of(x).item(), 6.0);
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  GradTape tape;
  const Var x = tape.parameter(Tensor::from({2}, {1, 2}));
  const Var c = tape.constant(Tensor::scalar(4.0));
  const Gradients g = tape.backward(mul(c, c));
  EXPECT_FALSE(g.reached(x));
  EXPECT_EQ(g.of(x), Tensor({2}));
}

TEST(Backward, NonScalarLossIsContractError) {
  GradTape tape;
  const Var x = tape.parameter(Tensor({2}));
  EXPECT_THROW(tape.backward(tanh(x)), ContractError);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  GradTape tape;
  const Var x = tape.parameter(Tensor::scalar(2.0));
  const Var y = mul(x, x);
  const Gradients g = tape.backward(add(y, mul(y, x)));  // x^2 + x^3
  EXPECT_EQ(g.of(x).item(), 2 * 2.0 + 3 * 4.0);
}

TEST(Backward, LinearInLoss) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Tensor xv = random_tensor({3, 4}, seed);
    const Tensor wv = random_tensor({4, 2}, seed + 100);
    auto grad_of = [&](int which) {
      GradTape tape;
      const Var x = tape.parameter(xv);
      const Var h = tanh(matmul(x, tape.constant(wv)));
      const Var l1 = random_projection(h, 1), l2 = sum(mul(h, h));
      const Var loss = which == 0 ? l1 : which == 1 ? l2 : add(l1, l2);
      return tape.backward(loss).of(x);
    };
    const Tensor a = grad_of(0), b = grad_of(1), both = grad_of(2);
    for (std::size_t i = 0; i < both.numel(); ++i) EXPECT_NEAR(both[i], a[i] + b[i], 1e-14);
  }
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    GradTape tape;
    const Var x = tape.parameter(random_tensor({2, 5, 3}, 9));
    const Var y = softmax(bmm(x, swap_last_axes(x)), 2);
    const Var loss = random_projection(y, 4);
    return std::make_pair(y.value(), tape.backward(loss).of(x));
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, EveryPrimitiveMatchesFiniteDifferences) {
  for (const GradientCase& c : layer_gradient_cases()) {
    std::size_t accepted = 0;
    for (std::uint64_t seed = 1; accepted < 50 && seed <= 120; ++seed) {
      const GradCheckResult r = run_gradient_case(c, seed);
      if (r.kinks > 0) {
        EXPECT_LT(r.max_smooth_error, 1e-4) << c.name << " seed " << seed;
        continue;
      }
      ++accepted;
      EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " seed " << seed << " input " << r.input << "[" << r.index
                                       << "] analytic " << r.analytic << " numeric " << r.numeric;
    }
    EXPECT_EQ(accepted, 50u) << c.name;
  }
}

TEST(GradCheck, DetectsAPerturbedBackwardRule) {
  debug::set_gradient_fault(true);
  GradientCase c = layer_gradient_cases()[5];
  ASSERT_EQ(c.name, "tanh");
  const GradCheckResult r = run_gradient_case(c, 1);
  debug::set_gradient_fault(false);
  EXPECT_GT(r.max_rel_error, 5e-4);
  EXPECT_EQ(r.kinks, 0u);
}

TEST(GradCheck, KinkIsRecognisedNotHidden) {
  // relu at exactly zero: the finite-difference step straddles the kink.
  const LossGraph g = [](GradTape&, std::span<const Var> in) { return sum(relu(in[0])); };
  const GradCheckResult r = check_gradients(g, {Tensor::from({2}, {2e-6, 0.5})});
  EXPECT_EQ(r.kinks, 1u);
  EXPECT_LT(r.max_smooth_error, 1e-10);
}
