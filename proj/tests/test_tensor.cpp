#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "common/random.hpp"
#include "tensor/gradcheck.hpp"
#include "tensor/ops.hpp"

using namespace s3d;

namespace {

TensorD random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return TensorD::from(std::move(shape), std::move(v));
}

// Scalarises an op output with fixed random weights so every output
// coordinate reaches the gradient.
TensorD weighted_sum(const TensorD& y, std::uint64_t seed = 99) {
  return sum(mul(y, random_tensor(y.shape(), seed)));
}

void expect_gradcheck(const std::function<TensorD(const TensorD&)>& fn, const TensorD& x, double tol = 1e-4) {
  const auto r = grad_check(fn, x, 1e-3);
  EXPECT_LT(r.max_relative_error, tol) << "worst index " << r.worst_index << " analytic " << r.analytic
                                       << " numeric " << r.numeric;
}

}  // namespace

TEST(Tensor, FactoriesAndShape) {
  auto z = TensorD::zeros({2, 3});
  EXPECT_EQ(z.numel(), 6u);
  EXPECT_EQ(z.dim(), 2u);
  EXPECT_FALSE(z.requires_grad());
  EXPECT_THROW(TensorD::from({2, 2}, {1.0, 2.0, 3.0}), InvalidArgument);
  EXPECT_DOUBLE_EQ(TensorD::scalar(4.5).item(), 4.5);
  EXPECT_THROW(z.item(), InvalidArgument);
}

TEST(Tensor, BackwardRequiresScalar) {
  auto x = TensorD::full({3}, 1.0, true);
  auto y = scale(x, 2.0);
  EXPECT_THROW(y.backward(), InvalidArgument);
  sum(y).backward();
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 2.0);
}

TEST(Tensor, GradientsAccumulateAcrossUses) {
  auto x = TensorD::from({1}, {3.0}, true);
  auto y = sum(add(mul(x, x), x));  // x^2 + x
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
}

TEST(Tensor, NoGradGuardSkipsRecording) {
  auto x = TensorD::full({2}, 1.0, true);
  {
    NoGradGuard g;
    auto y = sum(mul(x, x));
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_TRUE(sum(mul(x, x)).requires_grad());
}

TEST(Tensor, DetachCutsGraph) {
  auto x = TensorD::full({2}, 2.0, true);
  auto y = mul(x, x).detach();
  EXPECT_FALSE(y.requires_grad());
  EXPECT_DOUBLE_EQ(y.at(0), 4.0);
}

TEST(Ops, BroadcastValues) {
  auto a = TensorD::from({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = TensorD::from({3}, {10, 20, 30});
  auto c = add(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_DOUBLE_EQ(c.at(4), 25.0);
  EXPECT_THROW(add(a, TensorD::zeros({2})), InvalidArgument);
}

TEST(Ops, MatmulMatchesHandComputation) {
  auto a = TensorD::from({2, 2}, {1, 2, 3, 4});
  auto b = TensorD::from({2, 2}, {5, 6, 7, 8});
  auto c = matmul(a, b);
  EXPECT_DOUBLE_EQ(c.at(0), 19.0);
  EXPECT_DOUBLE_EQ(c.at(1), 22.0);
  EXPECT_DOUBLE_EQ(c.at(2), 43.0);
  EXPECT_DOUBLE_EQ(c.at(3), 50.0);
}

TEST(Ops, SoftmaxColumnsSumToOne) {
  auto x = random_tensor({2, 4, 3}, 5, -3, 3);
  auto s = softmax(x, 1);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t j = 0; j < 3; ++j) {
      double total = 0;
      for (std::size_t i = 0; i < 4; ++i) total += s.at(b * 12 + i * 3 + j);
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Ops, SoftplusIsStableForLargeInputs) {
  auto y = softplus(TensorD::from({2}, {800.0, -800.0}));
  EXPECT_DOUBLE_EQ(y.at(0), 800.0);
  EXPECT_GE(y.at(1), 0.0);
  EXPECT_LT(y.at(1), 1e-300);
}

TEST(Ops, LogRejectsNonPositive) {
  EXPECT_THROW(log(TensorD::from({1}, {0.0})), InvalidArgument);
}

// Direct seven-loop convolution used as an independent oracle.
TEST(Ops, Conv2dMatchesDirectLoops) {
  const std::size_t n = 2, c = 3, h = 7, w = 6, o = 4, k = 3;
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      auto x = random_tensor({n, c, h, w}, 1);
      auto wt = random_tensor({o, c, k, k}, 2);
      auto bias = random_tensor({o}, 3);
      auto y = conv2d(x, wt, bias, {stride, pad});
      const std::size_t ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
      ASSERT_EQ(y.shape(), (Shape{n, o, ho, wo}));
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t oc = 0; oc < o; ++oc)
          for (std::size_t i = 0; i < ho; ++i)
            for (std::size_t j = 0; j < wo; ++j) {
              double acc = bias.at(oc);
              for (std::size_t ic = 0; ic < c; ++ic)
                for (std::size_t ki = 0; ki < k; ++ki)
                  for (std::size_t kj = 0; kj < k; ++kj) {
                    const long yy = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
                    const long xx = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
                    if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w)) continue;
                    acc += x.at(((b * c + ic) * h + yy) * w + xx) * wt.at(((oc * c + ic) * k + ki) * k + kj);
                  }
              EXPECT_NEAR(y.at(((b * o + oc) * ho + i) * wo + j), acc, 1e-12);
            }
    }
  }
}

TEST(GradCheck, RejectsBadArguments) {
  auto x = random_tensor({3}, 1);
  EXPECT_THROW(grad_check([](const TensorD& v) { return v; }, x, 1e-3), InvalidArgument);
  EXPECT_THROW(grad_check([](const TensorD& v) { return sum(v); }, x, 0.0), InvalidArgument);
}

TEST(GradCheck, DetectsWrongGradient) {
  // A deliberately broken op: forward x^2, backward claims 3x.
  auto broken = [](const TensorD& x) {
    std::vector<double> v(x.values().begin(), x.values().end());
    for (auto& e : v) e *= e;
    auto y = make_op_result<double>("broken", x.shape(), std::move(v), {x}, [](TensorNode<double>& self) {
      auto& g = self.inputs[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += 3.0 * self.inputs[0]->value[i] * self.grad[i];
    });
    return sum(y);
  };
  const auto r = grad_check(broken, random_tensor({4}, 3, 0.5, 1.0), 1e-3);
  EXPECT_GT(r.max_relative_error, 0.1);
}

TEST(GradCheck, ElementwiseBinary) {
  auto b = random_tensor({3}, 11, 0.5, 1.5);
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(add(x, b)); }, random_tensor({2, 3}, 1));
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(sub(b, x)); }, random_tensor({2, 3}, 2));
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(mul(x, x)); }, random_tensor({2, 3}, 3));
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(div(b, add_scalar(square(x), 1.0))); },
                   random_tensor({2, 3}, 4));
  // Gradient into the broadcast operand.
  auto a = random_tensor({2, 3}, 12);
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(mul(a, x)); }, random_tensor({3}, 5));
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(div(a, x)); }, random_tensor({3}, 6, 0.5, 1.5));
}

TEST(GradCheck, ElementwiseUnary) {
  expect_gradcheck([](const TensorD& x) { return weighted_sum(neg(x)); }, random_tensor({5}, 1));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(scale(x, 2.5)); }, random_tensor({5}, 1));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(exp(x)); }, random_tensor({5}, 2));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(log(x)); }, random_tensor({5}, 3, 0.5, 2.0));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(sqrt(x)); }, random_tensor({5}, 4, 0.5, 2.0));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(square(x)); }, random_tensor({5}, 5));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(sigmoid(x)); }, random_tensor({5}, 6, -3, 3));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(tanh(x)); }, random_tensor({5}, 7));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(softplus(x)); }, random_tensor({5}, 8, -3, 3));
  // Kinks excluded by sampling away from 0.
  expect_gradcheck([](const TensorD& x) { return weighted_sum(relu(x)); },
                   TensorD::from({4}, {-0.7, -0.2, 0.3, 0.9}));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(leaky_relu(x, 0.2)); },
                   TensorD::from({4}, {-0.7, -0.2, 0.3, 0.9}));
}

TEST(GradCheck, Reductions) {
  expect_gradcheck([](const TensorD& x) { return sum(square(x)); }, random_tensor({2, 3}, 1));
  expect_gradcheck([](const TensorD& x) { return mean(square(x)); }, random_tensor({2, 3}, 2));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(sum_axis(x, 1)); }, random_tensor({2, 3, 4}, 3));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(mean_axis(x, 0, true)); }, random_tensor({2, 3}, 4));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(softmax(x, 1)); }, random_tensor({2, 3, 4}, 5));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(softmax(x, 2)); }, random_tensor({2, 3, 4}, 6));
}

TEST(GradCheck, ShapeOps) {
  expect_gradcheck([](const TensorD& x) { return weighted_sum(reshape(x, {3, 2})); }, random_tensor({2, 3}, 1));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(transpose(x)); }, random_tensor({2, 3, 4}, 2));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(upsample_nearest2x(x)); },
                   random_tensor({1, 2, 3, 3}, 3));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(gather_rows(x, {2, 0, 2})); },
                   random_tensor({3, 2}, 4));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(stack<double>({x, square(x)})); },
                   random_tensor({2, 2}, 5));
  expect_gradcheck([](const TensorD& x) { return weighted_sum(select(x, 1)); }, random_tensor({3, 2}, 6));
}

TEST(GradCheck, LinearAlgebra) {
  auto b = random_tensor({3, 4}, 21);
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(matmul(x, b)); }, random_tensor({2, 3}, 1));
  auto bb = random_tensor({2, 3, 4}, 22);
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(matmul(x, bb)); }, random_tensor({2, 5, 3}, 2));
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(matmul(bb, x)); }, random_tensor({2, 4, 2}, 3));
  auto w = random_tensor({4, 3}, 23);
  auto bias = random_tensor({4}, 24);
  expect_gradcheck([&](const TensorD& x) { return weighted_sum(linear(x, w, bias)); }, random_tensor({2, 3}, 4));
  auto xin = random_tensor({2, 3}, 25);
  expect_gradcheck([&](const TensorD& ww) { return weighted_sum(linear(xin, ww, bias)); }, random_tensor({4, 3}, 5));
  expect_gradcheck([&](const TensorD& bi) { return weighted_sum(linear(xin, w, bi)); }, random_tensor({4}, 6));
}

TEST(GradCheck, Conv2d) {
  auto w = random_tensor({3, 2, 3, 3}, 31);
  auto bias = random_tensor({3}, 32);
  auto x0 = random_tensor({1, 2, 5, 5}, 33);
  for (std::size_t stride : {1u, 2u}) {
    expect_gradcheck([&](const TensorD& x) { return weighted_sum(conv2d(x, w, bias, {stride, 1})); }, x0);
    expect_gradcheck([&](const TensorD& ww) { return weighted_sum(conv2d(x0, ww, bias, {stride, 1})); }, w);
    expect_gradcheck([&](const TensorD& bi) { return weighted_sum(conv2d(x0, w, bi, {stride, 1})); }, bias);
  }
}

TEST(Tensor, FloatAndDoubleAgree) {
  auto xd = random_tensor({2, 3}, 7);
  auto xf = tensor_cast<float>(xd);
  auto yd = sum(sigmoid(matmul(xd, transpose(xd))));
  auto yf = sum(sigmoid(matmul(xf, transpose(xf))));
  EXPECT_NEAR(yd.item(), static_cast<double>(yf.item()), 1e-5);
}
