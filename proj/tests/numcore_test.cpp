#include <gtest/gtest.h>

#include <cmath>

#include "belt2/error.hpp"
#include "belt2/numcore/gradcheck.hpp"
#include "belt2/numcore/ops.hpp"
#include "belt2/numcore/optim.hpp"
#include "grad_cases.hpp"
#include "test_util.hpp"

using namespace belt2;
using belt2::testing::GradMode;
using belt2::testing::PrimitiveGradCases;
using belt2::testing::random_tensor;

namespace {

void expect_values(const Tensor& t, const std::vector<double>& expected, double tol = 1e-12) {
  ASSERT_EQ(t.numel(), static_cast<std::int64_t>(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(t.data()[i], expected[i], tol) << "index " << i;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  GradMode mode;
  auto eye = Tensor::matrix({{1, 0}, {0, 1}});
  auto m = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(matmul(eye, m), {1, 2, 3, 4});
}

TEST(Matmul, RowTimesColumn) {
  GradMode mode;
  expect_values(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}})), {11});
}

TEST(Matmul, ZeroLeftOperand) {
  GradMode mode;
  Rng rng(1);
  auto out = matmul(Tensor::zeros({2, 3}), random_tensor({3, 4}, rng));
  EXPECT_EQ(out.shape(), (Shape{2, 4}));
  expect_values(out, std::vector<double>(8, 0.0));
}

TEST(Matmul, InnerDimMismatchThrows) {
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeMismatch);
}

TEST(LayerNorm, ConstantRowCollapsesToBias) {
  GradMode mode;
  auto x = Tensor::matrix({{5, 5, 5}});
  expect_values(layer_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3})), {0, 0, 0});
}

TEST(LayerNorm, TwoElementRow) {
  GradMode mode;
  auto x = Tensor::matrix({{1, 3}});
  expect_values(layer_norm(x, Tensor::full({2}, 1.0), Tensor::zeros({2}), 0.0), {-1, 1});
}

TEST(LayerNorm, ZeroGainGivesBias) {
  GradMode mode;
  Rng rng(2);
  auto b = Tensor::from({3}, {0.5, -1.0, 2.0});
  auto out = layer_norm(random_tensor({4, 3}, rng), Tensor::zeros({3}), b);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(out.at(r, c), b.data()[c]);
}

TEST(LayerNorm, WidthMismatchThrows) {
  EXPECT_THROW(layer_norm(Tensor::zeros({2, 3}), Tensor::zeros({4}), Tensor::zeros({4})), ShapeMismatch);
}

TEST(Gelu, KnownValuesAndAsymptotes) {
  GradMode mode;
  expect_values(gelu(Tensor::scalar(0.0)), {0.0});
  // tanh-approximation value at x = 1, evaluated independently.
  expect_values(gelu(Tensor::scalar(1.0)), {0.8411919906082768}, 1e-12);
  EXPECT_NEAR(gelu(Tensor::scalar(10.0)).item(), 10.0, 1e-9);
  EXPECT_NEAR(gelu(Tensor::scalar(-10.0)).item(), 0.0, 1e-9);
}

TEST(DepthwiseConv, DeltaKernelIsIdentity) {
  GradMode mode;
  Rng rng(3);
  auto x = random_tensor({5, 2}, rng);
  auto k = Tensor::matrix({{0, 0}, {1, 1}, {0, 0}});
  expect_values(depthwise_conv1d(x, k), x.to_vector());
}

TEST(DepthwiseConv, HandComputedBoxFilter) {
  GradMode mode;
  auto x = Tensor::matrix({{1}, {2}, {3}});
  auto k = Tensor::matrix({{1}, {1}, {1}});
  expect_values(depthwise_conv1d(x, k), {3, 6, 5});
}

TEST(DepthwiseConv, ZeroKernel) {
  GradMode mode;
  Rng rng(4);
  expect_values(depthwise_conv1d(random_tensor({4, 3}, rng), Tensor::zeros({3, 3})), std::vector<double>(12, 0.0));
  EXPECT_THROW(depthwise_conv1d(Tensor::zeros({4, 3}), Tensor::zeros({3, 2})), ShapeMismatch);
}

TEST(Backward, SquareAtThree) {
  GradMode mode;
  auto x = Tensor::scalar(3.0, true);
  backward(mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, StopGradientFactorContributesNothing) {
  GradMode mode;
  auto x = Tensor::scalar(3.0, true);
  backward(mul(stop_gradient(x), x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
}

TEST(Backward, StraightThroughCopiesValueAndPassesGradient) {
  GradMode mode;
  auto h = Tensor::matrix({{0.9, 0.8}}, true);
  auto c = Tensor::matrix({{1.0, 1.0}}, true);
  auto z = straight_through(h, c);
  EXPECT_EQ(z.to_vector(), c.to_vector());
  backward(sum(mul(z, Tensor::matrix({{2.0, -3.0}}))));
  EXPECT_EQ(std::vector<double>(h.grad().begin(), h.grad().end()), (std::vector<double>{2.0, -3.0}));
  EXPECT_FALSE(c.has_grad());
}

TEST(Backward, DisconnectedLeafGetsZero) {
  GradMode mode;
  auto x = Tensor::scalar(3.0, true);
  auto unused = Tensor::scalar(1.0, true);
  backward(square(x));
  EXPECT_FALSE(unused.has_grad());
}

TEST(Backward, NonScalarRootRejected) {
  auto x = Tensor::zeros({2}, true);
  EXPECT_THROW(backward(add_scalar(x, 1.0)), NonScalarRoot);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  GradMode mode;
  auto x = Tensor::scalar(2.0, true);
  auto y = square(x);     // 4
  auto z = add(y, y);     // 2x^2
  backward(mul(z, y));    // 2x^4 -> 8x^3 = 64
  EXPECT_DOUBLE_EQ(x.grad()[0], 64.0);
}

TEST(Backward, LeafGradientsAccumulate) {
  GradMode mode;
  auto x = Tensor::scalar(3.0, true);
  backward(square(x));
  backward(square(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(FiniteDiff, SumGivesOnes) {
  GradMode mode;
  Rng rng(5);
  auto g = finite_diff_grad([](const Tensor& t) { return sum(t).item(); }, random_tensor({3, 2}, rng));
  expect_values(g, std::vector<double>(6, 1.0), 1e-9);
}

TEST(FiniteDiff, CubeAtTwo) {
  GradMode mode;
  auto g = finite_diff_grad([](const Tensor& t) { return std::pow(t.item(), 3); }, Tensor::scalar(2.0), 1e-4);
  EXPECT_NEAR(g.item(), 12.0, 1e-6);
}

TEST(Softmax, RowsSumToOneAndAttentionIsConvex) {
  GradMode mode;
  Rng rng(6);
  auto p = softmax_rows(random_tensor({5, 7}, rng, 3.0));
  for (int r = 0; r < 5; ++r) {
    double s = 0.0;
    for (int c = 0; c < 7; ++c) {
      EXPECT_GE(p.at(r, c), 0.0);
      s += p.at(r, c);
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  auto v = random_tensor({7, 3}, rng);
  auto out = matmul(p, v);
  for (int c = 0; c < 3; ++c) {
    double lo = 1e300, hi = -1e300;
    for (int r = 0; r < 7; ++r) {
      lo = std::min(lo, v.at(r, c));
      hi = std::max(hi, v.at(r, c));
    }
    for (int r = 0; r < 5; ++r) {
      EXPECT_GE(out.at(r, c), lo - 1e-12);
      EXPECT_LE(out.at(r, c), hi + 1e-12);
    }
  }
}

TEST(Softmax, CausalMaskHidesFuture) {
  GradMode mode;
  Rng rng(7);
  auto p = softmax_rows(random_tensor({4, 4}, rng), true);
  for (int r = 0; r < 4; ++r)
    for (int c = r + 1; c < 4; ++c) EXPECT_EQ(p.at(r, c), 0.0);
  EXPECT_DOUBLE_EQ(p.at(0, 0), 1.0);
}

TEST(Precision, Float32ModeRoundsOutputs) {
  PrecisionScope f32(Precision::kFloat32);
  auto out = scale(Tensor::scalar(1.0), 0.1);
  EXPECT_EQ(out.item(), static_cast<double>(0.1f));
}

TEST(CheckFinite, RejectsNonFiniteOutputs) {
  GradMode mode;
  EXPECT_THROW(exp(Tensor::scalar(1e6)), NonFinite);
}

TEST(AdamW, FrozenParameterUntouched) {
  GradMode mode;
  auto w = Tensor::scalar(1.0, true);
  auto frozen = Tensor::scalar(2.0, false);
  AdamW opt({w, frozen}, AdamWConfig{});
  for (int i = 0; i < 10; ++i) {
    opt.zero_grad();
    backward(add(square(w), mul(frozen, w)));
    opt.step();
  }
  EXPECT_LT(w.item(), 1.0);
  EXPECT_EQ(frozen.item(), 2.0);
}

// Every differentiable primitive against central differences, 64-bit, dims <= 8.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  GradMode mode;
  const PrimitiveGradCases fixture(100 + GetParam());
  for (const auto& cs : fixture.cases()) {
    const auto res = check_gradients(cs.f, cs.params);
    EXPECT_LE(res.max_rel_err, 1e-4) << cs.name << " worst " << res.worst_param;
  }
}

INSTANTIATE_TEST_SUITE_P(RandomInputs, OpGradient, ::testing::Range(0, 6));
