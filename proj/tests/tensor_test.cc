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
#include "segrefine/tensor.hpp"

namespace segrefine {
namespace {

TEST(TensorTest, SizeMatchesShape) {
  Tensor t(Shape{2, 3, 4, 5}, 1.5f);
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(t.at(1, 2, 3, 4), 1.5f);
  EXPECT_EQ(t.index(1, 0, 0, 0), 60u);
}

TEST(TensorTest, RejectsDataOfWrongLength) {
  EXPECT_THROW(Tensor(Shape{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST(TensorTest, RequireFiniteFlagsNan) {
  Tensor t(Shape{1, 1, 1, 2});
  EXPECT_NO_THROW(require_finite(t, "t"));
  t[1] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "t"), NumericError);
}

TEST(TensorTest, ArgmaxPrefersLowestIdOnTies) {
  Tensor p(Shape{1, 3, 1, 2}, std::vector<float>{0.4f, 0.2f, 0.4f, 0.2f, 0.2f, 0.6f});
  const LabelMap l = argmax_labels(p);
  EXPECT_EQ(l.at(0, 0, 0), 0);
  EXPECT_EQ(l.at(0, 0, 1), 2);
}

TEST(TensorTest, OneHotAndIgnore) {
  LabelMap l(1, 1, 3);
  l.labels = {2, LabelMap::kIgnore, 0};
  const Tensor t = one_hot(l, 3);
  EXPECT_EQ(t.at(0, 2, 0, 0), 1.0f);
  EXPECT_EQ(t.at(0, 0, 0, 0), 0.0f);
  EXPECT_FLOAT_EQ(t.at(0, 1, 0, 1), 1.0f / 3.0f);
  EXPECT_TRUE(is_prob_map(t));
  l.labels[0] = 3;
  EXPECT_THROW(one_hot(l, 3), DataError);
}

TEST(TensorTest, ProbMapCheck) {
  Tensor t(Shape{1, 2, 1, 1}, std::vector<float>{0.3f, 0.7f});
  EXPECT_TRUE(is_prob_map(t));
  t[1] = 0.71f;
  EXPECT_FALSE(is_prob_map(t));
  t[0] = -0.01f;
  t[1] = 1.01f;
  EXPECT_FALSE(is_prob_map(t));
}

TEST(TensorTest, StackAndSplitBatch) {
  Tensor a(Shape{1, 2, 2, 2}, 1.0f);
  Tensor b(Shape{1, 2, 2, 2}, 2.0f);
  const std::vector<Tensor> items{a, b};
  const Tensor s = stack_batch<float>(items);
  EXPECT_EQ(s.shape(), (Shape{2, 2, 2, 2}));
  EXPECT_EQ(batch_item(s, 0), a);
  EXPECT_EQ(batch_item(s, 1), b);

  LabelMap x(1, 2, 2, 1);
  LabelMap y(1, 2, 2, 3);
  const std::vector<LabelMap> maps{x, y};
  const LabelMap m = stack_labels(maps);
  EXPECT_EQ(m.n, 2u);
  EXPECT_EQ(label_item(m, 1), y);
}

TEST(TensorTest, CastRoundTrip) {
  Tensor t(Shape{1, 1, 1, 3}, std::vector<float>{0.1f, -2.0f, 3.5f});
  EXPECT_EQ(tensor_cast<float>(tensor_cast<double>(t)), t);
}

}  // namespace
}  // namespace segrefine
