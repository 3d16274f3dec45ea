// Copyright 2026 The segrefine Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <limits>
#include <vector>

#include "gtest/gtest.h"
#include "segrefine/error.hpp"
#include "segrefine/ops.hpp"
#include "test_util.hpp"

namespace segrefine {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

ConvWeights<float> single_channel(std::vector<float> kernel) {
  ConvWeights<float> w(1, 1);
  w.kernel = Tensor(Shape{1, 1, 3, 3}, std::move(kernel));
  return w;
}

TEST(Conv2dTest, DeltaKernelIsIdentity) {
  const Tensor x = random_tensor(Shape{1, 1, 3, 3}, 1);
  const auto w = single_channel({0, 0, 0, 0, 1, 0, 0, 0, 0});
  EXPECT_EQ(conv2d(x, w), x);
}

TEST(Conv2dTest, ZeroKernelGivesZeros) {
  const Tensor x = random_tensor(Shape{2, 3, 5, 4}, 2);
  ConvWeights<float> w(4, 3);
  const Tensor y = conv2d(x, w);
  EXPECT_EQ(y.shape(), (Shape{2, 4, 5, 4}));
  for (const float v : y.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Conv2dTest, OnesKernelOnOnesInput) {
  const Tensor x(Shape{1, 1, 3, 3}, 1.0f);
  const auto w = single_channel(std::vector<float>(9, 1.0f));
  const Tensor y = conv2d(x, w);
  const std::vector<float> expected{4, 6, 4, 6, 9, 6, 4, 6, 4};
  EXPECT_EQ(std::vector<float>(y.values().begin(), y.values().end()), expected);
}

TEST(Conv2dTest, AddsBiasPerChannel) {
  const Tensor x(Shape{1, 1, 2, 2}, 0.0f);
  ConvWeights<float> w(2, 1);
  w.bias = Tensor(Shape{1, 2, 1, 1}, std::vector<float>{0.5f, -1.0f});
  const Tensor y = conv2d(x, w);
  EXPECT_EQ(y.at(0, 0, 1, 1), 0.5f);
  EXPECT_EQ(y.at(0, 1, 0, 0), -1.0f);
}

TEST(Conv2dTest, ChannelMismatchIsShapeError) {
  const Tensor x(Shape{1, 2, 3, 3});
  ConvWeights<float> w(1, 3);
  EXPECT_THROW(conv2d(x, w), ShapeError);
}

TEST(Conv2dTest, NonFiniteInputIsNumericError) {
  Tensor x(Shape{1, 1, 3, 3});
  x[4] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(conv2d(x, single_channel(std::vector<float>(9, 1.0f))), NumericError);
}

TEST(Conv2dTest, LinearWithoutBias) {
  const auto a = random_tensor<double>(Shape{1, 3, 6, 5}, 3);
  const auto b = random_tensor<double>(Shape{1, 3, 6, 5}, 4);
  ConvWeights<double> w(2, 3);
  w.kernel = random_tensor<double>(w.kernel.shape(), 5);
  const double alpha = 0.7, beta = -1.3;
  Tensor64 mix(a.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = alpha * a[i] + beta * b[i];
  const auto lhs = conv2d(mix, w);
  const auto ya = conv2d(a, w);
  const auto yb = conv2d(b, w);
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    const double rhs = alpha * ya[i] + beta * yb[i];
    EXPECT_NEAR(lhs[i], rhs, 1e-5 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Conv2dTest, Deterministic) {
  const Tensor x = random_tensor(Shape{2, 8, 16, 16}, 6);
  ConvWeights<float> w(16, 8);
  w.kernel = random_tensor(w.kernel.shape(), 7);
  EXPECT_EQ(conv2d(x, w), conv2d(x, w));
  const Tensor g = random_tensor(Shape{2, 16, 16, 16}, 8);
  const auto g1 = conv2d_backward(x, w, g);
  const auto g2 = conv2d_backward(x, w, g);
  EXPECT_EQ(g1.input, g2.input);
  EXPECT_EQ(g1.weights, g2.weights);
}

TEST(MaxPoolTest, ConstantInput) {
  const Tensor x(Shape{1, 2, 4, 6}, 3.25f);
  const auto pool = maxpool2x2(x);
  EXPECT_EQ(pool.output.shape(), (Shape{1, 2, 2, 3}));
  for (const float v : pool.output.values()) EXPECT_EQ(v, 3.25f);
}

TEST(MaxPoolTest, RoutesGradientToMaximum) {
  const Tensor x(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const auto pool = maxpool2x2(x);
  EXPECT_EQ(pool.output[0], 4.0f);
  const Tensor g = maxpool2x2_backward(pool, Tensor(Shape{1, 1, 1, 1}, 1.0f));
  EXPECT_EQ(std::vector<float>(g.values().begin(), g.values().end()),
            (std::vector<float>{0, 0, 0, 1}));
}

TEST(MaxPoolTest, TiesGoToFirstInScanOrder) {
  const Tensor x(Shape{1, 1, 2, 2}, 5.0f);
  const auto pool = maxpool2x2(x);
  EXPECT_EQ(pool.output[0], 5.0f);
  const Tensor g = maxpool2x2_backward(pool, Tensor(Shape{1, 1, 1, 1}, 1.0f));
  EXPECT_EQ(std::vector<float>(g.values().begin(), g.values().end()),
            (std::vector<float>{1, 0, 0, 0}));
}

TEST(MaxPoolTest, OddSizesPadWithNegativeInfinity) {
  const Tensor x(Shape{1, 1, 3, 3}, std::vector<float>{-1, -2, -3, -4, -5, -6, -7, -8, -9});
  const auto pool = maxpool2x2(x);
  EXPECT_EQ(pool.output.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(pool.output.at(0, 0, 0, 0), -1.0f);
  EXPECT_EQ(pool.output.at(0, 0, 0, 1), -3.0f);
  EXPECT_EQ(pool.output.at(0, 0, 1, 0), -7.0f);
  EXPECT_EQ(pool.output.at(0, 0, 1, 1), -9.0f);
  const Tensor g = maxpool2x2_backward(pool, Tensor(Shape{1, 1, 2, 2}, 1.0f));
  EXPECT_EQ(g.shape(), x.shape());
  EXPECT_EQ(g.at(0, 0, 2, 2), 1.0f);
  EXPECT_EQ(g.at(0, 0, 1, 1), 0.0f);
}

TEST(MaxPoolTest, EmptyInputIsShapeError) {
  EXPECT_THROW(maxpool2x2(Tensor(Shape{1, 1, 0, 4})), ShapeError);
}

TEST(UpsampleTest, ConstantStaysConstant) {
  const Tensor x(Shape{1, 2, 3, 5}, -0.75f);
  const Tensor y = upsample_bilinear_2x(x);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 6, 10}));
  for (const float v : y.values()) EXPECT_FLOAT_EQ(v, -0.75f);
}

TEST(UpsampleTest, HalfPixelGolden) {
  const Tensor x(Shape{1, 1, 1, 2}, std::vector<float>{0.0f, 1.0f});
  const Tensor y = upsample_bilinear_2x(x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 4}));
  const std::vector<float> row{0.0f, 0.25f, 0.75f, 1.0f};
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_FLOAT_EQ(y.at(0, 0, r, c), row[c]);
  }
}

TEST(UpsampleTest, RampStaysMonotone) {
  Tensor x(Shape{1, 1, 3, 7});
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 7; ++c) x.at(0, 0, r, c) = static_cast<float>(c * c) * 0.1f;
  }
  const Tensor y = upsample_bilinear_2x(x);
  for (std::size_t r = 0; r < y.h(); ++r) {
    for (std::size_t c = 1; c < y.w(); ++c) EXPECT_GE(y.at(0, 0, r, c), y.at(0, 0, r, c - 1));
  }
}

TEST(ActivationTest, ClosedForms) {
  const Tensor x(Shape{1, 1, 1, 3}, std::vector<float>{-1.0f, 2.0f, 0.0f});
  const Tensor r = activation(x, Activation::kRelu);
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 2.0f);
  EXPECT_EQ(activation(x, Activation::kTanh)[2], 0.0f);
  EXPECT_EQ(activation(x, Activation::kSigmoid)[2], 0.5f);
  const Tensor64 l(Shape{1, 1, 1, 1}, std::log(3.0));
  EXPECT_NEAR(activation(l, Activation::kSigmoid)[0], 0.75, 1e-15);
  EXPECT_EQ(activation(x, Activation::kNone), x);
}

TEST(SoftmaxTest, EqualLogitsAreUniform) {
  const Tensor x(Shape{1, 4, 2, 2}, 0.3f);
  const Tensor y = softmax_channels(x);
  for (const float v : y.values()) EXPECT_FLOAT_EQ(v, 0.25f);
}

TEST(SoftmaxTest, LogThreeGolden) {
  const Tensor64 x(Shape{1, 2, 1, 1}, std::vector<double>{0.0, std::log(3.0)});
  const Tensor64 y = softmax_channels(x);
  EXPECT_NEAR(y[0], 0.25, 1e-15);
  EXPECT_NEAR(y[1], 0.75, 1e-15);
}

TEST(SoftmaxTest, ShiftInvariantAndNormalized) {
  const Tensor x = random_tensor(Shape{2, 5, 4, 4}, 9, -20.0, 20.0);
  Tensor shifted = x;
  for (auto& v : shifted.values()) v += 7.0f;
  const Tensor a = softmax_channels(x);
  EXPECT_LT(max_abs_diff(a, softmax_channels(shifted)), 1e-6);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t p = 0; p < 16; ++p) {
      double sum = 0.0;
      for (std::size_t c = 0; c < 5; ++c) {
        const float v = a[a.index(b, c, 0, 0) + p];
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
        sum += v;
      }
      EXPECT_NEAR(sum, 1.0, 1e-6);
    }
  }
}

TEST(SoftmaxTest, SurvivesExtremeLogits) {
  const Tensor x(Shape{1, 2, 1, 1}, std::vector<float>{1000.0f, -1000.0f});
  const Tensor y = softmax_channels(x);
  EXPECT_TRUE(y.all_finite());
  EXPECT_EQ(y[0], 1.0f);
}

TEST(SoftmaxTest, SingleChannelIsShapeError) {
  EXPECT_THROW(softmax_channels(Tensor(Shape{1, 1, 2, 2})), ShapeError);
}

TEST(ConcatTest, SkipChannelCounts) {
  EXPECT_EQ(concat_channels(Tensor(Shape{2, 256, 4, 4}), Tensor(Shape{2, 256, 4, 4})).shape(),
            (Shape{2, 512, 4, 4}));
  EXPECT_EQ(concat_channels(Tensor(Shape{1, 64, 8, 8}), Tensor(Shape{1, 64, 8, 8})).shape(),
            (Shape{1, 128, 8, 8}));
}

TEST(ConcatTest, SliceInvertsConcat) {
  const Tensor a = random_tensor(Shape{2, 3, 4, 5}, 10);
  const Tensor b = random_tensor(Shape{2, 2, 4, 5}, 11);
  const Tensor ab = concat_channels(a, b);
  EXPECT_EQ(ab.at(1, 0, 2, 3), a.at(1, 0, 2, 3));
  EXPECT_EQ(ab.at(1, 3, 2, 3), b.at(1, 0, 2, 3));
  EXPECT_EQ(slice_channels(ab, 0, 3), a);
  EXPECT_EQ(slice_channels(ab, 3, 2), b);
  const auto [ga, gb] = split_channels(ab, 3);
  EXPECT_EQ(ga, a);
  EXPECT_EQ(gb, b);
}

TEST(ConcatTest, SpatialMismatchIsShapeError) {
  EXPECT_THROW(concat_channels(Tensor(Shape{1, 1, 4, 4}), Tensor(Shape{1, 1, 4, 5})), ShapeError);
  EXPECT_THROW(concat_channels(Tensor(Shape{1, 1, 4, 4}), Tensor(Shape{2, 1, 4, 4})), ShapeError);
}

}  // namespace
}  // namespace segrefine
