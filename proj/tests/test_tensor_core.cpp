#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace fireline;
using fireline::testing::random_tensor;

namespace {

Tensor<double> T4(Shape s, std::vector<double> v) { return Tensor<double>(std::move(s), std::move(v)); }

Var<double> V(Tensor<double> t, bool grad = false) { return Var<double>(std::move(t), grad); }

}  // namespace

TEST(Tensor, ElementCountMatchesShape) {
  Tensor<float> t({2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>(3)), Error);
}

TEST(Tensor, GradPresentIffRequiresGrad) {
  Var<double> a(Tensor<double>({2, 3}), true);
  EXPECT_EQ(a.grad().shape(), a.shape());
  Var<double> b(Tensor<double>({2, 3}), false);
  EXPECT_TRUE(b.grad().empty());
}

TEST(Conv2d, IdentityKernel) {
  auto x = T4({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = kernels::conv2d_forward(x, T4({1, 1, 1, 1}, {1}), T4({1}, {0}), 1, 0);
  EXPECT_EQ(y, x);
}

TEST(Conv2d, GlobalSum) {
  auto x = T4({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto y = kernels::conv2d_forward(x, Tensor<double>({1, 1, 3, 3}, 1.0), T4({1}, {0}), 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 45);
}

TEST(Conv2d, StrideTwo) {
  auto y = kernels::conv2d_forward(Tensor<double>({1, 1, 4, 4}, 1.0), Tensor<double>({1, 1, 2, 2}, 1.0),
                                   T4({1}, {0}), 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 4);
}

TEST(Conv2d, MatchesDirectLoops) {
  Rng rng(11);
  for (auto [stride, pad, k] : {std::tuple{1, 1, 3}, {2, 0, 3}, {1, 0, 1}, {2, 1, 3}, {3, 2, 2}}) {
    auto x = random_tensor<double>({2, 3, 7, 6}, rng);
    auto w = random_tensor<double>({4, 3, std::size_t(k), std::size_t(k)}, rng);
    auto b = random_tensor<double>({4}, rng);
    auto got = kernels::conv2d_forward(x, w, b, stride, pad);
    auto want = fireline::testing::reference_conv2d(x, w, b, stride, pad);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LT(fireline::testing::max_abs_diff(got, want), 1e-12);
  }
}

TEST(Conv2d, IdentityIsBitExact) {
  Rng rng(3);
  auto x = random_tensor<float>({2, 5, 8, 8}, rng);
  Tensor<float> w({5, 5, 1, 1});
  for (std::size_t c = 0; c < 5; ++c) w.at(c, c, 0, 0) = 1;
  EXPECT_EQ(kernels::conv2d_forward(x, w, Tensor<float>({5}), 1, 0), x);
}

TEST(Conv2d, Errors) {
  EXPECT_THROW(kernels::conv2d_forward(Tensor<double>({1, 2, 4, 4}), Tensor<double>({1, 3, 3, 3}),
                                       Tensor<double>({1}), 1, 1),
               ConfigError);
  EXPECT_THROW(kernels::conv2d_forward(Tensor<double>({1, 1, 2, 2}), Tensor<double>({1, 1, 3, 3}),
                                       Tensor<double>({1}), 1, 0),
               ConfigError);
  try {
    kernels::conv2d_forward(Tensor<double>({1, 2, 4, 4}), Tensor<double>({1, 3, 3, 3}), Tensor<double>({1}), 1, 1);
  } catch (const ConfigError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("1,2,4,4"), std::string::npos) << m;
    EXPECT_NE(m.find("1,3,3,3"), std::string::npos) << m;
  }
}

TEST(ConvTranspose2d, SinglePixelBroadcast) {
  auto y = kernels::conv_transpose2d_forward(T4({1, 1, 1, 1}, {3}), Tensor<double>({1, 1, 2, 2}, 1.0),
                                             T4({1}, {0}), 2);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (double v : y.data()) EXPECT_EQ(v, 3);
}

TEST(ConvTranspose2d, BlockExpansion) {
  auto y = kernels::conv_transpose2d_forward(T4({1, 1, 2, 2}, {1, 2, 3, 4}), Tensor<double>({1, 1, 2, 2}, 1.0),
                                             T4({1}, {0}), 2);
  EXPECT_EQ(y, T4({1, 1, 4, 4}, {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
}

TEST(ConvTranspose2d, ZeroInputGivesBias) {
  Rng rng(5);
  auto y = kernels::conv_transpose2d_forward(Tensor<double>({2, 3, 3, 3}), random_tensor<double>({3, 2, 2, 2}, rng),
                                             T4({2}, {0.5, -1.5}), 2);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y_ = 0; y_ < 6; ++y_)
      for (std::size_t x = 0; x < 6; ++x) {
        EXPECT_EQ(y.at(n, 0, y_, x), 0.5);
        EXPECT_EQ(y.at(n, 1, y_, x), -1.5);
      }
}

TEST(ConvTranspose2d, MatchesDirectLoops) {
  Rng rng(12);
  auto x = random_tensor<double>({2, 3, 4, 5}, rng);
  auto w = random_tensor<double>({3, 4, 2, 2}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto got = kernels::conv_transpose2d_forward(x, w, b, 2);
  EXPECT_LT(fireline::testing::max_abs_diff(got, fireline::testing::reference_conv_transpose2d(x, w, b, 2)), 1e-12);
}

TEST(ConvTranspose2d, KernelMustEqualStride) {
  EXPECT_THROW(kernels::conv_transpose2d_forward(Tensor<double>({1, 1, 2, 2}), Tensor<double>({1, 1, 3, 3}),
                                                 Tensor<double>({1}), 2),
               ConfigError);
}

TEST(Maxpool2d, Basic) {
  EXPECT_EQ(kernels::maxpool2d_forward(T4({1, 1, 2, 2}, {1, 2, 3, 4}), nullptr)[0], 4);
  Tensor<double> ramp({1, 1, 4, 4});
  for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i);
  EXPECT_EQ(kernels::maxpool2d_forward(ramp, nullptr), T4({1, 1, 2, 2}, {5, 7, 13, 15}));
}

TEST(Maxpool2d, TiesRouteToFirstRowMajor) {
  Tape<double> tape;
  auto x = V(Tensor<double>({1, 1, 4, 4}, 2.5), true);
  auto y = maxpool2d(&tape, x);
  for (double v : y.value().data()) EXPECT_EQ(v, 2.5);
  tape.backward(sum(&tape, y));
  const std::vector<double> want{1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0};
  EXPECT_EQ(x.grad().vec(), want);
}

TEST(Maxpool2d, OddExtentRejected) {
  EXPECT_THROW(kernels::maxpool2d_forward(Tensor<double>({1, 1, 3, 4}), nullptr), ConfigError);
}

TEST(Maxpool2d, NearestUpsampleOfPoolBoundsInput) {
  // Nearest upsampling of the pooled map dominates the input pointwise,
  // and never exceeds the input's maximum.
  Rng rng(8);
  auto x = random_tensor<double>({2, 3, 6, 8}, rng);
  auto p = kernels::maxpool2d_forward(x, nullptr);
  double xmax = -1e9;
  for (double v : x.data()) xmax = std::max(xmax, v);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 6; ++y)
        for (std::size_t xx = 0; xx < 8; ++xx) {
          EXPECT_GE(p.at(n, c, y / 2, xx / 2), x.at(n, c, y, xx));
          EXPECT_LE(p.at(n, c, y / 2, xx / 2), xmax);
        }
}

TEST(Batchnorm, StandardizedInputIsFixedPoint) {
  BatchNormState<double> st(1);
  auto y = batchnorm2d<double>(nullptr, V(T4({2, 1, 1, 1}, {-1, 1})), V(T4({1}, {1})), V(T4({1}, {0})), st,
                               Mode::Train);
  EXPECT_NEAR(y.value()[0], -1, 1e-5);
  EXPECT_NEAR(y.value()[1], 1, 1e-5);
}

TEST(Batchnorm, ZeroGammaGivesBeta) {
  Rng rng(2);
  BatchNormState<double> st(2);
  auto y = batchnorm2d<double>(nullptr, V(random_tensor<double>({3, 2, 4, 4}, rng)), V(T4({2}, {0, 0})),
                               V(T4({2}, {0.25, -3})), st, Mode::Train);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t i = 0; i < 16; ++i) {
      EXPECT_EQ(y.value()[(n * 2 + 0) * 16 + i], 0.25);
      EXPECT_EQ(y.value()[(n * 2 + 1) * 16 + i], -3);
    }
}

TEST(Batchnorm, EvalUsesRunningStats) {
  BatchNormState<double> st(1);
  st.running_mean[0] = 2;
  st.running_var[0] = 4;
  auto y = batchnorm2d<double>(nullptr, V(T4({1, 1, 1, 1}, {4})), V(T4({1}, {1})), V(T4({1}, {0})), st, Mode::Eval);
  // (4 - 2) / sqrt(4 + 1e-5), evaluated in 30-digit decimal arithmetic
  EXPECT_NEAR(y.value()[0], 0.999998750002343745, 1e-15);
}

TEST(Batchnorm, TrainOutputIsStandardized) {
  Rng rng(21);
  BatchNormState<double> st(3);
  auto x = random_tensor<double>({4, 3, 5, 5}, rng, -4, 9);
  auto y = batchnorm2d<double>(nullptr, V(x), V(Tensor<double>({3}, 1.0)), V(Tensor<double>({3})), st, Mode::Train);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) s += y.value()[(n * 3 + c) * 25 + i];
    const double mean = s / 100;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) s2 += std::pow(y.value()[(n * 3 + c) * 25 + i] - mean, 2);
    EXPECT_LT(std::abs(mean), 1e-5);
    EXPECT_NEAR(s2 / 100, 1.0, 1e-4);
  }
}

TEST(Batchnorm, RunningStatsMomentum) {
  BatchNormState<double> st(1);
  batchnorm2d<double>(nullptr, V(T4({4, 1, 1, 1}, {1, 2, 3, 6})), V(T4({1}, {1})), V(T4({1}, {0})), st,
                      Mode::Train);
  // batch mean 3, unbiased variance 14/3
  EXPECT_NEAR(st.running_mean[0], 0.1 * 3, 1e-15);
  EXPECT_NEAR(st.running_var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
}

TEST(Batchnorm, SingleElementRejectedInTrainMode) {
  BatchNormState<double> st(1);
  EXPECT_THROW(batchnorm2d<double>(nullptr, V(T4({1, 1, 1, 1}, {3})), V(T4({1}, {1})), V(T4({1}, {0})), st,
                                   Mode::Train),
               Error);
}

TEST(Activations, LeakyRelu) {
  EXPECT_EQ(kernels::leaky_relu(2.0), 2.0);
  EXPECT_DOUBLE_EQ(kernels::leaky_relu(-2.0), -0.2);
  EXPECT_EQ(kernels::leaky_relu(0.0), 0.0);
  EXPECT_EQ(kernels::leaky_relu_grad(0.0), 1.0);
  EXPECT_DOUBLE_EQ(kernels::leaky_relu_grad(-1.0), 0.1);
}

TEST(Activations, HardSigmoid) {
  EXPECT_EQ(kernels::hard_sigmoid(0.0), 0.5);
  EXPECT_EQ(kernels::hard_sigmoid(10.0), 1.0);
  EXPECT_EQ(kernels::hard_sigmoid(-10.0), 0.0);
  EXPECT_DOUBLE_EQ(kernels::hard_sigmoid(1.0), 0.7);
  EXPECT_DOUBLE_EQ(kernels::hard_sigmoid_grad(2.4), 0.2);
  EXPECT_EQ(kernels::hard_sigmoid_grad(2.6), 0.0);
  EXPECT_EQ(kernels::hard_sigmoid_grad(-2.6), 0.0);
}

TEST(Concat, TwoInputs) {
  auto a = T4({1, 1, 2, 2}, {1, 2, 3, 4}), b = T4({1, 1, 2, 2}, {5, 6, 7, 8});
  auto y = concat_channels<double>(nullptr, {V(a), V(b)});
  EXPECT_EQ(y.value(), T4({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8}));
  EXPECT_EQ(concat_channels<double>(nullptr, {V(a)}).value(), a);
}

TEST(Concat, ChannelBookkeeping) {
  Rng rng(4);
  auto a = random_tensor<double>({2, 1, 3, 3}, rng), b = random_tensor<double>({2, 3, 3, 3}, rng),
       c = random_tensor<double>({2, 5, 3, 3}, rng);
  auto y = concat_channels<double>(nullptr, {V(a), V(b), V(c)}).value();
  ASSERT_EQ(y.dim(1), 9u);
  // counting from 1: output channel 4 is channel 3 of input 2
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(y.at(n, 3, i, j), b.at(n, 2, i, j));
  // slicing recovers every input bit-exactly
  Tensor<double> back({2, 5, 3, 3});
  kernels::channel_slice_add(y, 4, back);
  EXPECT_EQ(back, c);
}

TEST(Concat, SpatialMismatchNamesInput) {
  try {
    concat_channels<double>(nullptr, {V(Tensor<double>({1, 1, 2, 2})), V(Tensor<double>({1, 1, 2, 2})),
                                      V(Tensor<double>({1, 1, 4, 2}))});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("input 2"), std::string::npos) << e.what();
  }
}

TEST(Backward, SumGradIsOnes) {
  Tape<double> tape;
  auto x = V(T4({3}, {1, 2, 3}), true);
  tape.backward(sum(&tape, x));
  EXPECT_EQ(x.grad().vec(), (std::vector<double>{1, 1, 1}));
}

TEST(Backward, FanOutAccumulates) {
  Tape<double> tape;
  auto x = V(T4({3}, {1, 2, 3}), true);
  tape.backward(sum(&tape, mul(&tape, x, x)));
  EXPECT_EQ(x.grad().vec(), (std::vector<double>{2, 4, 6}));
}

TEST(Backward, NonScalarLossRejected) {
  Tape<double> tape;
  auto x = V(T4({3}, {1, 2, 3}), true);
  auto y = mul(&tape, x, x);
  EXPECT_THROW(tape.backward(y), UsageError);
}

TEST(Backward, TapeVisitsEachOpOnce) {
  Tape<double> tape;
  auto x = V(T4({2}, {1, 2}), true);
  auto y = add(&tape, x, x);
  auto z = sum(&tape, mul(&tape, y, y));
  EXPECT_EQ(tape.size(), 3u);
  tape.backward(z);
  EXPECT_EQ(tape.size(), 0u);
  // d/dx sum((2x)^2) = 8x
  EXPECT_EQ(x.grad().vec(), (std::vector<double>{8, 16}));
}

TEST(Backward, NoTapeRecordsNothing) {
  auto x = V(T4({2}, {1, 2}), true);
  auto y = mul<double>(nullptr, x, x);
  EXPECT_FALSE(y.requires_grad());
}
