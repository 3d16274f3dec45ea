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

#include "gtest/gtest.h"
#include "segrefine/error.hpp"
#include "segrefine/grad_check.hpp"
#include "segrefine/ops.hpp"
#include "test_util.hpp"

namespace segrefine {
namespace {

using testing::random_tensor;

TEST(GradCheckTest, RelativeErrorDefinition) {
  EXPECT_DOUBLE_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
}

TEST(GradCheckTest, ConvInputAndWeights) {
  const auto x = random_tensor<double>(Shape{1, 2, 5, 5}, 1);
  ConvWeights<double> w(3, 2);
  w.kernel = random_tensor<double>(w.kernel.shape(), 2);
  w.bias = random_tensor<double>(w.bias.shape(), 3);
  const double err_x = grad_check_op(
      [&](const Tensor64& in) { return conv2d(in, w); },
      [&](const Tensor64& in, const Tensor64& g) { return conv2d_backward(in, w, g).input; }, x);
  EXPECT_LT(err_x, 1e-4);

  const auto r = random_tensor<double>(Shape{1, 3, 5, 5}, 4);
  auto with_kernel = [&](const Tensor64& k) {
    ConvWeights<double> v = w;
    v.kernel = k;
    const auto y = conv2d(x, v);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  const auto grads = conv2d_backward(x, w, r);
  EXPECT_LT(grad_check(with_kernel, grads.weights.kernel, w.kernel), 1e-4);

  auto with_bias = [&](const Tensor64& b) {
    ConvWeights<double> v = w;
    v.bias = b;
    const auto y = conv2d(x, v);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
  };
  EXPECT_LT(grad_check(with_bias, grads.weights.bias, w.bias), 1e-4);
}

TEST(GradCheckTest, Softmax) {
  const auto x = random_tensor<double>(Shape{2, 4, 3, 3}, 5, -2.0, 2.0);
  const double err = grad_check_op(
      [](const Tensor64& in) { return softmax_channels(in); },
      [](const Tensor64& in, const Tensor64& g) {
        return softmax_channels_backward(softmax_channels(in), g);
      },
      x);
  EXPECT_LT(err, 1e-4);
}

TEST(GradCheckTest, ActivationsAwayFromKinks) {
  auto x = random_tensor<double>(Shape{1, 3, 4, 4}, 6, -2.0, 2.0);
  for (auto& v : x.values()) {
    if (std::abs(v) < 0.1) v += v < 0 ? -0.2 : 0.2;
  }
  for (const auto mode : {Activation::kRelu, Activation::kTanh, Activation::kSigmoid}) {
    const double err = grad_check_op(
        [&](const Tensor64& in) { return activation(in, mode); },
        [&](const Tensor64& in, const Tensor64& g) {
          return activation_backward(activation(in, mode), g, mode);
        },
        x);
    EXPECT_LT(err, mode == Activation::kRelu ? 1e-6 : 1e-4);
  }
}

TEST(GradCheckTest, PoolAndUpsample) {
  // Distinct values keep every pooling window's maximum stable under the
  // probe step.
  Tensor64 x(Shape{1, 2, 6, 6});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.37 * static_cast<double>(i * i));
  const double pool_err = grad_check_op(
      [](const Tensor64& in) { return maxpool2x2(in).output; },
      [](const Tensor64& in, const Tensor64& g) { return maxpool2x2_backward(maxpool2x2(in), g); },
      x);
  EXPECT_LT(pool_err, 1e-4);

  const double up_err = grad_check_op(
      [](const Tensor64& in) { return upsample_bilinear_2x(in); },
      [](const Tensor64& in, const Tensor64& g) {
        return upsample_bilinear_2x_backward(g, in.shape());
      },
      x);
  EXPECT_LT(up_err, 1e-4);
}

TEST(GradCheckTest, DetectsWrongGradient) {
  const auto x = random_tensor<double>(Shape{1, 1, 3, 3}, 7);
  const double err = grad_check_op(
      [](const Tensor64& in) { return activation(in, Activation::kTanh); },
      [](const Tensor64&, const Tensor64& g) { return g; }, x);
  EXPECT_GT(err, 1e-2);
}

TEST(GradCheckTest, NonFiniteObjectiveIsNumericError) {
  const Tensor64 x(Shape{1, 1, 1, 2}, 1.0);
  const Tensor64 g(Shape{1, 1, 1, 2}, 0.0);
  auto blows_up = [](const Tensor64&) { return std::numeric_limits<double>::infinity(); };
  EXPECT_THROW(grad_check(blows_up, g, x), NumericError);
}

TEST(GradCheckTest, SamplesSubsetOfCoordinates) {
  const auto x = random_tensor<double>(Shape{1, 1, 8, 8}, 8);
  int calls = 0;
  auto objective = [&](const Tensor64& t) {
    ++calls;
    double s = 0.0;
    for (const double v : t.values()) s += v * v;
    return s;
  };
  Tensor64 analytic = x;
  analytic *= 2.0;
  GradCheckOptions opts;
  opts.max_samples = 5;
  EXPECT_LT(grad_check(objective, analytic, x, opts), 1e-6);
  EXPECT_EQ(calls, 10);
}

}  // namespace
}  // namespace segrefine
