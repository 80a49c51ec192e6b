// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "gsifn/core/adam.hpp"
#include "gsifn/core/flops.hpp"
#include "op_catalog.hpp"

#include <gtest/gtest.h>

namespace gsifn {
namespace {

using testing::gradient_error;
using testing::random_tensor;
using TD = Tensor<double>;
using Inputs = std::vector<TD>;

constexpr double kGradTol = 1e-4;

class OpGradient : public ::testing::TestWithParam<testing::GradCase> {};

TEST_P(OpGradient, MatchesCentralDifferences) {
  EXPECT_LE(testing::case_error(GetParam()), kGradTol) << GetParam().name;
}

INSTANTIATE_TEST_SUITE_P(Catalog, OpGradient, ::testing::ValuesIn(testing::op_catalog()),
                         [](const auto& info) { return std::string(info.param.name); });

TEST(Ops, MatmulIdentity) {
  Rng rng(1);
  auto a = random_tensor({2, 2}, rng);
  auto y = ops::matmul(TD::identity(2), a);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[i], a[i]);
}

TEST(Ops, MatmulShapeErrorNamesBothShapes) {
  TD a = TD::zeros({2, 3}), b = TD::zeros({4, 5});
  try {
    ops::matmul(a, b);
    FAIL();
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(4,5)"), std::string::npos) << msg;
  }
}

TEST(Ops, SoftmaxSymmetricRow) {
  auto y = ops::softmax(TD::row({0.0, 0.0}));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Ops, SoftmaxSingleVisibleEntry) {
  TD mask = TD::row({0.0, ops::kMaskedLogit});
  auto y = ops::softmax(TD::row({5.0, 7.0}), &mask);
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(Ops, SoftmaxFullyMaskedRowThrows) {
  TD mask = TD::matrix(2, 2, {0.0, 0.0, ops::kMaskedLogit, ops::kMaskedLogit});
  EXPECT_THROW(ops::softmax(TD::zeros({2, 2}), &mask), Error);
}

TEST(Ops, MaskedSoftmaxRowsSumToOneAndMaskedAreZero) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 1 + rng.below(6), n = 1 + rng.below(6);
    auto x = random_tensor({m, n}, rng, 5.0);
    std::vector<float> mk(m * n);
    for (std::size_t r = 0; r < m; ++r) {
      const std::size_t keep = rng.below(n);
      for (std::size_t c = 0; c < n; ++c)
        mk[r * n + c] = (c == keep || rng.uniform() < 0.5) ? 0.0f : static_cast<float>(ops::kMaskedLogit);
    }
    Tensor<float> mask({m, n}, mk);
    auto y = ops::softmax(x.cast<float>(), &mask);
    for (std::size_t r = 0; r < m; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        if (ops::is_masked(mk[r * n + c])) EXPECT_EQ(y.at(r, c), 0.0f);
        s += y.at(r, c);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(Ops, ConcatSplitRoundTrip) {
  Rng rng(5);
  for (std::size_t axis : {0u, 1u}) {
    auto x = random_tensor({6, 6}, rng);
    auto parts = ops::split(x, axis, {1, 3, 2});
    auto y = ops::concat(parts, axis);
    EXPECT_EQ(y.shape(), x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
  }
}

TEST(Ops, SplitLengthsMustCoverAxis) { EXPECT_THROW(ops::split(TD::zeros({4, 2}), 0, {1, 2}), ShapeError); }

TEST(Ops, DropoutEvalIsIdentity) {
  Rng rng(9);
  auto x = random_tensor({5, 5}, rng);
  auto y = ops::dropout(x, 0.5, false, rng);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Ops, DropoutTrainPreservesExpectation) {
  Rng rng(11);
  const std::size_t n = 20000;
  auto x = TD::full({1, n}, 1.0);
  for (double p : {0.2, 0.5}) {
    auto y = ops::dropout(x, p, true, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += y[i];
    EXPECT_NEAR(s / n, 1.0, 0.02) << "p=" << p;
  }
}

TEST(Ops, NonFiniteOutputThrows) {
  EXPECT_THROW(ops::exp(TD::row({1000.0})), NumericError);
  EXPECT_THROW(ops::log(TD::row({0.0})), NumericError);
}

TEST(Ops, ConvEvenKernelRejected) {
  EXPECT_THROW(ops::conv1d(TD::zeros({3, 2}), TD::zeros({2, 2, 2}), TD::zeros({1, 2})), Error);
}

TEST(Ops, MatmulFlopCount) {
  FlopCounter fc;
  {
    ScopedFlopCounter scope(fc);
    ops::matmul(TD::zeros({2, 3}), TD::zeros({3, 4}));
  }
  EXPECT_EQ(fc.matmul, 48u);
  ops::matmul(TD::zeros({2, 3}), TD::zeros({3, 4}));
  EXPECT_EQ(fc.total(), 48u);
}

TEST(Tape, SquareGradient) {
  Tape<double> tape;
  auto x = tape.watch(TD::scalar(3.0));
  auto g = tape.backward(ops::mul(x, x));
  EXPECT_DOUBLE_EQ(g.of(x).item(), 6.0);
}

TEST(Tape, TanhAtZeroGradientIsOne) {
  Tape<double> tape;
  auto x = tape.watch(TD::zeros({2, 3}));
  auto g = tape.backward(ops::sum(ops::tanh(x)));
  const auto gx = g.of(x);
  for (double v : gx.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Tape, NonScalarLossRejected) {
  Tape<double> tape;
  auto x = tape.watch(TD::zeros({2, 2}));
  EXPECT_THROW(tape.backward(ops::tanh(x)), ShapeError);
}

TEST(Tape, ConsumedAfterBackward) {
  Tape<double> tape;
  auto x = tape.watch(TD::scalar(1.0));
  auto y = ops::mul(x, x);
  tape.backward(y);
  EXPECT_TRUE(tape.consumed());
  EXPECT_THROW(tape.backward(y), Error);
}

TEST(Tape, ReusedInputAccumulates) {
  Tape<double> tape;
  auto x = tape.watch(TD::row({2.0, -1.0}));
  auto y = ops::sum(ops::add(ops::mul(x, x), ops::scale(x, 3.0)));
  auto g = tape.backward(y).of(x);
  EXPECT_DOUBLE_EQ(g[0], 7.0);
  EXPECT_DOUBLE_EQ(g[1], 1.0);
}

TEST(Tape, UnusedLeafGetsZeroGradient) {
  Tape<double> tape;
  auto x = tape.watch(TD::scalar(1.0));
  auto z = tape.watch(TD::row({1.0, 2.0}));
  auto g = tape.backward(ops::mul(x, x));
  EXPECT_FALSE(g.contains(z));
  EXPECT_EQ(g.of(z)[1], 0.0);
}

TEST(Adam, ZeroGradZeroDecayLeavesParams) {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0};
  AdamState<double> st;
  adam_step<double>(p, g, st, AdamConfig{});
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], -2.0);
}

TEST(Adam, FirstStepMovesAgainstGradientByLr) {
  // t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  std::vector<double> p{0.0, 0.0}, g{0.3, -2.0};
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step<double>(p, g, st, cfg);
  EXPECT_NEAR(p[0], -0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
}

TEST(Adam, TwoIdenticalStepsSecondMomentEqualsGradSquared) {
  std::vector<double> p{0.0}, g{0.7};
  AdamState<double> st;
  AdamConfig cfg;
  adam_step<double>(p, g, st, cfg);
  adam_step<double>(p, g, st, cfg);
  const double v_hat = st.v[0] / (1.0 - cfg.beta2 * cfg.beta2);
  const double m_hat = st.m[0] / (1.0 - cfg.beta1 * cfg.beta1);
  EXPECT_NEAR(v_hat, 0.49, 1e-12);
  EXPECT_NEAR(m_hat, 0.7, 1e-12);
}

TEST(Adam, DecoupledWeightDecay) {
  std::vector<double> p{2.0}, g{0.0};
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.5;
  adam_step<double>(p, g, st, cfg);
  EXPECT_DOUBLE_EQ(p[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Adam, NonPositiveLrRejected) {
  std::vector<double> p{1.0}, g{1.0};
  AdamState<double> st;
  AdamConfig cfg;
  cfg.lr = 0.0;
  EXPECT_THROW(adam_step<double>(p, g, st, cfg), Error);
}

}  // namespace
}  // namespace gsifn
