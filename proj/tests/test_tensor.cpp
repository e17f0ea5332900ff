#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "povmap/autograd.hpp"
#include "povmap/sgd.hpp"
#include "oracles.hpp"

using namespace povmap;
using testing_oracles::random_tensor;

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

}  // namespace

TEST(Conv2d, OnesFilterSumsWindow) {
  Tensor<double> x(Shape{1, 3, 3, 1}, 1.0);
  Tensor<double> w(Shape{3, 3, 1, 1}, 1.0);
  Tensor<double> b(Shape{1});
  auto y = ops::conv2d(x, w, b, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(y[0], 9.0);
}

TEST(Conv2d, IdentityFilterIsIdentity) {
  auto x = random_tensor<double>(Shape{2, 5, 4, 3}, 11);
  Tensor<double> w(Shape{1, 1, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  auto y = ops::conv2d(x, w, Tensor<double>(Shape{3}), 1, 0);
  EXPECT_EQ(y.values(), x.values());
}

TEST(Conv2d, MatchesNaiveLoops) {
  auto x = random_tensor<double>(Shape{1, 8, 8, 2}, 1);
  auto w = random_tensor<double>(Shape{3, 3, 2, 4}, 2);
  auto b = random_tensor<double>(Shape{4}, 3);
  auto fast = ops::conv2d(x, w, b, 2, 1);
  auto slow = testing_oracles::naive_conv(x, w, b, 2, 1);
  ASSERT_EQ(fast.shape(), slow.shape());
  for (std::size_t i = 0; i < fast.size(); ++i) EXPECT_LT(rel_err(fast[i], slow[i]), 1e-6);
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
  Tensor<double> x(Shape{1, 4, 4, 2});
  Tensor<double> w(Shape{3, 3, 3, 1});
  try {
    ops::conv2d(x, w, Tensor<double>(Shape{1}), 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(Conv2d, NonIntegralOutputIsGeometryError) {
  Tensor<double> x(Shape{1, 6, 6, 1});
  Tensor<double> w(Shape{3, 3, 1, 1});
  try {
    ops::conv2d(x, w, Tensor<double>(Shape{1}), 2, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::geometry);
  }
}

TEST(MaxPool, TwoByTwo) {
  Tensor<double> x(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  auto y = ops::maxpool2d(x, 2, 2);
  EXPECT_EQ(y[0], 4.0);
}

TEST(MaxPool, ConstantInputRoutesToTopLeft) {
  Tensor<double> x(Shape{1, 4, 4, 2}, 5.0);
  auto r = ops::maxpool2d_forward(x, 2, 2);
  for (double v : r.y.values()) EXPECT_EQ(v, 5.0);
  Tensor<double> dy(r.y.shape(), 1.0);
  auto dx = ops::maxpool2d_backward(x.shape(), r.argmax, dy);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t xx = 0; xx < 4; ++xx)
      for (std::size_t c = 0; c < 2; ++c)
        EXPECT_EQ(dx.at(0, y, xx, c), (y % 2 == 0 && xx % 2 == 0) ? 1.0 : 0.0);
}

TEST(MaxPool, MatchesBruteForce) {
  auto x = random_tensor<double>(Shape{1, 6, 6, 1}, 5);
  auto y = ops::maxpool2d(x, 3, 3);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 1}));
  for (std::size_t oy = 0; oy < 2; ++oy)
    for (std::size_t ox = 0; ox < 2; ++ox) {
      double m = -1e300;
      for (std::size_t ky = 0; ky < 3; ++ky)
        for (std::size_t kx = 0; kx < 3; ++kx) m = std::max(m, x.at(0, oy * 3 + ky, ox * 3 + kx, 0));
      EXPECT_EQ(y.at(0, oy, ox, 0), m);
    }
}

TEST(MaxPool, WindowTooLargeIsGeometryError) {
  Tensor<double> x(Shape{1, 2, 2, 1});
  EXPECT_THROW(ops::maxpool2d(x, 3, 1), Error);
}

TEST(FullyConnected, IdentityIsUnroll) {
  auto x = random_tensor<double>(Shape{2, 2, 3, 2}, 4);
  Tensor<double> w(Shape{12, 12});
  for (std::size_t i = 0; i < 12; ++i) w[i * 12 + i] = 1.0;
  auto y = ops::fully_connected(x, w, Tensor<double>(Shape{12}));
  ASSERT_EQ(y.shape(), (Shape{2, 12}));
  EXPECT_EQ(y.values(), x.values());
}

TEST(FullyConnected, HandArithmetic) {
  Tensor<double> x(Shape{1, 2}, {1, 2});
  Tensor<double> w(Shape{2, 2}, {1, 1, 1, -1});
  Tensor<double> b(Shape{2}, {0, 1});
  auto y = ops::fully_connected(x, w, b);
  EXPECT_DOUBLE_EQ(y[0], 3.0);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
}

TEST(FullyConnected, MatchesMatrixVectorLoop) {
  auto x = random_tensor<double>(Shape{3, 2, 2, 3}, 8);
  auto w = random_tensor<double>(Shape{5, 12}, 9);
  auto b = random_tensor<double>(Shape{5}, 10);
  auto y = ops::fully_connected(x, w, b);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t o = 0; o < 5; ++o) {
      double s = b[o];
      for (std::size_t d = 0; d < 12; ++d) s += w[o * 12 + d] * x[n * 12 + d];
      EXPECT_LT(rel_err(y[n * 5 + o], s), 1e-6);
    }
}

TEST(FullyConnected, WidthMismatch) {
  Tensor<double> x(Shape{1, 3});
  Tensor<double> w(Shape{2, 4});
  EXPECT_THROW(ops::fully_connected(x, w, Tensor<double>(Shape{2})), Error);
}

TEST(Elementwise, Relu) {
  Tensor<double> x(Shape{2}, {-2.0, 3.0});
  auto y = ops::relu(x);
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 3.0);
}

TEST(Elementwise, DropoutRateZeroIsIdentity) {
  auto x = random_tensor<double>(Shape{4, 7}, 3);
  EXPECT_EQ(ops::dropout(x, 0.0, true, 99).values(), x.values());
}

TEST(Elementwise, DropoutInferenceIsIdentity) {
  auto x = random_tensor<double>(Shape{4, 7}, 3);
  EXPECT_EQ(ops::dropout(x, 0.5, false, 99).values(), x.values());
}

TEST(Elementwise, DropoutExpectationMatchesInput) {
  Tensor<double> x(Shape{1, 4}, {1.0, 2.0, -3.0, 0.5});
  std::vector<double> mean(4, 0.0);
  const int draws = 20000;
  for (int s = 0; s < draws; ++s) {
    auto y = ops::dropout(x, 0.5, true, static_cast<std::uint64_t>(s) + 1);
    for (std::size_t i = 0; i < 4; ++i) mean[i] += y[i] / draws;
  }
  for (std::size_t i = 0; i < 4; ++i) EXPECT_LT(std::abs(mean[i] - x[i]) / std::abs(x[i]), 0.02);
}

TEST(Elementwise, DropoutRateOneRejected) {
  Tensor<double> x(Shape{1, 2});
  EXPECT_THROW(ops::dropout(x, 1.0, true, 1), Error);
}

TEST(SoftmaxXent, UniformLogits) {
  Tensor<double> logits(Shape{1, 3});
  std::vector<int> labels{1};
  auto r = ops::softmax_xent<double>(logits, labels);
  EXPECT_NEAR(r.loss, std::log(3.0), 1e-15);
}

TEST(SoftmaxXent, LabelOutOfRange) {
  Tensor<double> logits(Shape{1, 3});
  std::vector<int> labels{3};
  try {
    ops::softmax_xent<double>(logits, labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::range);
  }
}

TEST(SoftmaxXent, LargeLogitsStayFinite) {
  Tensor<double> logits(Shape{1, 2}, {1000.0, -1000.0});
  std::vector<int> labels{1};
  auto r = ops::softmax_xent<double>(logits, labels);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(r.grad.all_finite());
}

TEST(Sgd, MomentumZeroIsPlainStep) {
  Tensor<double> p(Shape{2}, {1.0, -1.0});
  SgdState<double> sgd(0.5, 0.0);
  std::vector<Tensor<double>*> ps{&p};
  std::vector<Tensor<double>> gs{Tensor<double>(Shape{2}, {2.0, 4.0})};
  sgd.step(ps, gs);
  EXPECT_DOUBLE_EQ(p[0], 0.0);
  EXPECT_DOUBLE_EQ(p[1], -3.0);
}

TEST(Sgd, ZeroLearningRateLeavesParameters) {
  Tensor<double> p(Shape{3}, {1.0, 2.0, 3.0});
  const auto before = p.values();
  SgdState<double> sgd(0.0, 0.9);
  std::vector<Tensor<double>*> ps{&p};
  std::vector<Tensor<double>> gs{Tensor<double>(Shape{3}, 7.0)};
  for (int i = 0; i < 3; ++i) sgd.step(ps, gs);
  EXPECT_EQ(p.values(), before);
}

TEST(Sgd, TwoMomentumSteps) {
  Tensor<double> p(Shape{1}, {1.0});
  SgdState<double> sgd(0.1, 0.9);
  std::vector<Tensor<double>*> ps{&p};
  std::vector<Tensor<double>> gs{Tensor<double>(Shape{1}, 1.0)};
  sgd.step(ps, gs);
  sgd.step(ps, gs);
  EXPECT_NEAR(p[0], 1.0 - 0.1 - 0.19, 1e-15);
}

TEST(Sgd, ShapeMismatch) {
  Tensor<double> p(Shape{2});
  SgdState<double> sgd(0.1, 0.9);
  std::vector<Tensor<double>*> ps{&p};
  std::vector<Tensor<double>> gs{Tensor<double>(Shape{3})};
  EXPECT_THROW(sgd.step(ps, gs), Error);
}

TEST(Sgd, InvalidMomentum) { EXPECT_THROW(SgdState<double>(0.1, 1.0), Error); }

// ---------------------------------------------------------------------------
// Finite differences

TEST(GradCheck, LinearFunctionIsExact) {
  auto w = random_tensor<double>(Shape{1, 6}, 21);
  auto x = random_tensor<double>(Shape{1, 6}, 22);
  GradCheckFn<double> fn = [&](Tape<double>& t, Var in) { return t.weighted_sum(in, w); };
  auto r = finite_diff_check<double>(fn, x, 1e-5);
  EXPECT_EQ(r.checked, 6u);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, ReluKinkIsExcluded) {
  Tensor<double> x(Shape{1, 4}, {0.0, 1.0, -1.0, 0.0});
  GradCheckFn<double> fn = [](Tape<double>& t, Var in) { return t.relu(in); };
  auto r = finite_diff_check<double>(fn, x, 1e-5);
  EXPECT_EQ(r.excluded, (std::vector<std::size_t>{0, 3}));
  EXPECT_EQ(r.checked, 2u);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, ConvReluFcComposite) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto w1 = random_tensor<double>(Shape{3, 3, 2, 3}, seed * 10 + 1);
    auto b1 = random_tensor<double>(Shape{3}, seed * 10 + 2);
    auto w2 = random_tensor<double>(Shape{4, 27}, seed * 10 + 3);
    auto b2 = random_tensor<double>(Shape{4}, seed * 10 + 4);
    auto x = random_tensor<double>(Shape{2, 5, 5, 2}, seed * 10 + 5);
    GradCheckFn<double> fn = [&](Tape<double>& t, Var in) {
      Var h = t.conv2d(in, t.constant(w1), t.constant(b1), 1, 0);
      h = t.relu(h);
      return t.fully_connected(h, t.constant(w2), t.constant(b2));
    };
    auto r = finite_diff_check<double>(fn, x, 1e-5);
    EXPECT_GT(r.checked, 0u);
    EXPECT_LT(r.max_rel_error, 1e-6) << "seed " << seed;
  }
}

TEST(GradCheck, ParameterGradients) {
  // Differentiate with respect to conv filters by feeding them as the input.
  auto x = random_tensor<double>(Shape{2, 6, 6, 2}, 31);
  auto w = random_tensor<double>(Shape{3, 3, 2, 2}, 32);
  Tensor<double> b(Shape{2}, {0.1, -0.2});
  std::vector<int> labels{0, 1};
  GradCheckFn<double> fn = [&](Tape<double>& t, Var filt) {
    Var h = t.conv2d(t.constant(x), filt, t.constant(b), 1, 1);
    h = t.maxpool2d(h, 2, 2);
    h = t.spatial_mean(h);
    return t.softmax_xent(h, labels);
  };
  auto r = finite_diff_check<double>(fn, w, 1e-5);
  EXPECT_GT(r.checked, 0u);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, SinglePrecisionTolerance) {
  auto w1 = random_tensor<float>(Shape{2, 2, 1, 2}, 41);
  auto w2 = random_tensor<float>(Shape{3, 18}, 42);
  auto x = random_tensor<float>(Shape{1, 4, 4, 1}, 43);
  GradCheckFn<float> fn = [&](Tape<float>& t, Var in) {
    Var h = t.conv2d(in, t.constant(w1), t.constant(Tensor<float>(Shape{2})), 1, 0);
    h = t.relu(h);
    return t.fully_connected(h, t.constant(w2), t.constant(Tensor<float>(Shape{3})));
  };
  auto r = finite_diff_check<float>(fn, x, 1e-2, 1e-3);
  EXPECT_LT(r.max_rel_error, 1e-3);
}

TEST(GradCheck, NonPositiveEpsilonRejected) {
  Tensor<double> x(Shape{1, 1});
  GradCheckFn<double> fn = [](Tape<double>& t, Var in) { return t.relu(in); };
  EXPECT_THROW(finite_diff_check<double>(fn, x, 0.0), Error);
}

TEST(Tensor, ShapeDataMismatch) {
  EXPECT_THROW(Tensor<double>(Shape{2, 2}, std::vector<double>(3)), Error);
}

TEST(Tensor, FiniteAfterOps) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto x = random_tensor<double>(Shape{1, 6, 6, 2}, 100 + s);
    auto w = random_tensor<double>(Shape{3, 3, 2, 2}, 200 + s);
    auto y = ops::maxpool2d(ops::relu(ops::conv2d(x, w, Tensor<double>(Shape{2}), 1, 0)), 2, 2);
    EXPECT_TRUE(y.all_finite());
  }
}
