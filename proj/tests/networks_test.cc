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

#include <map>
#include <string>
#include <tuple>

#include "gtest/gtest.h"
#include "model_check.hpp"
#include "segrefine/error.hpp"
#include "segrefine/networks.hpp"
#include "test_util.hpp"

namespace segrefine {
namespace {

using testing::random_labels;
using testing::random_probmap;
using testing::random_tensor;

// (in, out) per layer for K classes at full width.
std::map<std::string, std::pair<std::size_t, std::size_t>> reference_plan(std::size_t k) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> plan = {
      {"conv1_1", {3 + k, 64}}, {"conv1_2", {64, 64}},   {"conv2_1", {64, 128}},
      {"conv2_2", {128, 128}},  {"conv3_1", {128, 256}}, {"conv3_2", {256, 256}},
      {"conv4_1", {256, 256}},  {"conv4_2", {256, 256}}, {"flow", {64, 2}},
      {"C_out", {64, k}},       {"M_conv1", {128, 64}},  {"M_conv2", {64, 64}},
      {"M_conv3", {64, 256}},   {"mask", {256, 1}},
  };
  for (const std::string p : {"E_", "C_"}) {
    plan[p + "conv1_1"] = {512, 256};
    plan[p + "conv1_2"] = {256, 256};
    plan[p + "conv2_1"] = {384, 128};
    plan[p + "conv2_2"] = {128, 128};
    plan[p + "conv3_1"] = {192, 64};
    plan[p + "conv3_2"] = {64, 64};
  }
  return plan;
}

ModelSpec small(Regime regime = Regime::kJoint) { return ModelSpec{4, 8, regime}; }

TEST(LayerPlanTest, MatchesReferenceChannels) {
  for (const std::size_t k : {4u, 21u}) {
    const auto plan = layer_plan(ModelSpec{k, 1, Regime::kJoint});
    const auto ref = reference_plan(k);
    ASSERT_EQ(plan.size(), ref.size());
    for (const auto& l : plan) {
      ASSERT_TRUE(ref.count(l.name)) << l.name;
      EXPECT_EQ(std::make_pair(l.in_channels, l.out_channels), ref.at(l.name)) << l.name;
    }
  }
}

TEST(LayerPlanTest, Activations) {
  for (const auto& l : layer_plan(ModelSpec{})) {
    if (l.name == "flow") {
      EXPECT_EQ(l.act, Activation::kTanh);
    } else if (l.name == "mask") {
      EXPECT_EQ(l.act, Activation::kSigmoid);
    } else if (l.name == "C_out") {
      EXPECT_EQ(l.act, Activation::kNone);
    } else {
      EXPECT_EQ(l.act, Activation::kRelu) << l.name;
    }
  }
}

TEST(LayerPlanTest, RegimesKeepTheirBranch) {
  for (const auto& l : layer_plan(ModelSpec{4, 1, Regime::kPropOnly})) {
    EXPECT_NE(l.name.rfind("C_", 0), 0u) << l.name;
    EXPECT_NE(l.name.rfind("M_", 0), 0u) << l.name;
    EXPECT_NE(l.name, "mask");
  }
  for (const auto& l : layer_plan(ModelSpec{4, 1, Regime::kReplOnly})) {
    EXPECT_NE(l.name.rfind("E_", 0), 0u) << l.name;
    EXPECT_NE(l.name, "flow");
    EXPECT_NE(l.name, "mask");
  }
  EXPECT_EQ(layer_plan(ModelSpec{4, 1, Regime::kPropOnly}).size(), 15u);
  EXPECT_EQ(layer_plan(ModelSpec{4, 1, Regime::kReplOnly}).size(), 15u);
}

TEST(LayerPlanTest, WidthDivisorScalesHiddenChannels) {
  for (const auto& l : layer_plan(ModelSpec{4, 4, Regime::kJoint})) {
    if (l.name == "conv1_1") EXPECT_EQ(l.out_channels, 16u);
    if (l.name == "E_conv1_1") EXPECT_EQ(l.in_channels, 128u);
    if (l.name == "flow") EXPECT_EQ(l.out_channels, 2u);
    if (l.name == "C_out") EXPECT_EQ(l.out_channels, 4u);
    if (l.name == "mask") EXPECT_EQ(l.out_channels, 1u);
  }
}

TEST(LayerPlanTest, RejectsBadSpecs) {
  EXPECT_THROW(layer_plan(ModelSpec{1, 1, Regime::kJoint}), ConfigError);
  EXPECT_THROW(layer_plan(ModelSpec{4, 3, Regime::kJoint}), ConfigError);
  EXPECT_THROW(build_model(1, 0), ConfigError);
}

TEST(BuildModelTest, TwentyOneClassInputLayer) {
  const auto p = build_model(ModelSpec{21, 1, Regime::kPropOnly}, 3);
  EXPECT_EQ(p.at("conv1_1").kernel.shape(), (Shape{64, 24, 3, 3}));
  EXPECT_EQ(p.num_classes(), 21u);
  EXPECT_EQ(p.width_divisor(), 1u);
}

TEST(BuildModelTest, DeterministicWithZeroBiases) {
  const auto a = build_model(small(), 11);
  const auto b = build_model(small(), 11);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == build_model(small(), 12));
  for (const auto& l : a.layers()) {
    for (const float v : l.weights.bias.values()) EXPECT_EQ(v, 0.0f);
  }
  EXPECT_EQ(a.regime(), Regime::kJoint);
}

TEST(BuildModelTest, SharedLayersAgreeAcrossRegimes) {
  const auto joint = build_model(small(), 5);
  const auto prop = build_model(small(Regime::kPropOnly), 5);
  const auto repl = build_model(small(Regime::kReplOnly), 5);
  EXPECT_EQ(prop.regime(), Regime::kPropOnly);
  EXPECT_EQ(repl.regime(), Regime::kReplOnly);
  for (const auto& l : prop.layers()) EXPECT_EQ(l.weights, joint.at(l.name)) << l.name;
  for (const auto& l : repl.layers()) EXPECT_EQ(l.weights, joint.at(l.name)) << l.name;
}

TEST(BuildModelTest, XavierUniformVariance) {
  const auto p = build_model(ModelSpec{4, 1, Regime::kPropOnly}, 7);
  for (const char* name : {"conv2_1", "conv2_2"}) {
    const auto& k = p.at(name).kernel;
    const double fan_in = static_cast<double>(k.c()) * 9.0;
    const double fan_out = static_cast<double>(k.n()) * 9.0;
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    double sum = 0.0, sq = 0.0;
    for (const float v : k.values()) {
      EXPECT_LE(std::abs(v), bound);
      sum += v;
      sq += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(k.size());
    const double var = sq / n - (sum / n) * (sum / n);
    EXPECT_NEAR(var, 2.0 / (fan_in + fan_out), 0.1 * 2.0 / (fan_in + fan_out)) << name;
  }
}

struct Inputs {
  Tensor image;
  Tensor init;
  LabelMap gt;
};

Inputs inputs(std::size_t n, std::size_t size, std::uint64_t seed) {
  return {random_tensor(Shape{n, 3, size, size}, seed),
          random_probmap(Shape{n, 4, size, size}, seed + 1),
          random_labels(n, size, size, 4, seed + 2)};
}

TEST(ForwardTest, FullWidthShapePlan) {
  const auto params = build_model(ModelSpec{4, 1, Regime::kJoint}, 1);
  const Inputs in = inputs(1, 64, 2);
  const auto t = forward_full(in.image, in.init, params, 16.0);
  EXPECT_EQ(t.flow_raw.shape(), (Shape{1, 2, 64, 64}));
  EXPECT_EQ(t.fused.shape(), (Shape{1, 4, 64, 64}));
  EXPECT_EQ(t.mask.shape(), (Shape{1, 1, 64, 64}));
  const auto ref = reference_plan(4);
  const std::map<std::string, std::size_t> size = {
      {"conv1", 64}, {"conv2", 32}, {"conv3", 16}, {"conv4", 8}};
  for (const auto& l : t.layers) {
    const auto [in_ch, out_ch] = ref.at(l.name);
    EXPECT_EQ(l.input.c(), in_ch) << l.name;
    EXPECT_EQ(l.output.c(), out_ch) << l.name;
    const std::string stage = l.name.substr(0, 5);
    const std::size_t expected = size.count(stage) ? size.at(stage)
                                 : l.name.find("conv1_") != std::string::npos ? 16
                                 : l.name.find("conv2_") != std::string::npos ? 32
                                                                              : 64;
    EXPECT_EQ(l.output.h(), expected) << l.name;
  }
}

TEST(ForwardTest, OutputsAreDistributions) {
  const auto params = build_model(small(), 2);
  const Inputs in = inputs(2, 32, 3);
  const auto t = forward_full(in.image, in.init, params, 16.0);
  EXPECT_TRUE(is_prob_map(t.prop));
  EXPECT_TRUE(is_prob_map(t.repl));
  EXPECT_TRUE(is_prob_map(t.fused));
  for (const float m : t.mask.values()) {
    EXPECT_GT(m, 0.0f);
    EXPECT_LT(m, 1.0f);
  }
  for (std::size_t i = 0; i < t.fused.size(); ++i) {
    EXPECT_GE(t.fused[i], std::min(t.prop[i], t.repl[i]));
    EXPECT_LE(t.fused[i], std::max(t.prop[i], t.repl[i]));
  }
  for (std::size_t i = 0; i < t.displacement.size(); ++i) {
    EXPECT_LE(std::abs(t.displacement[i]), 16.0f);
  }
}

TEST(ForwardTest, ZeroFlowHeadLeavesInitUnchanged) {
  auto params = build_model(small(), 3);
  auto& flow = params.at("flow");
  flow.kernel.fill(0.0f);
  flow.bias.fill(0.0f);
  const Inputs in = inputs(1, 16, 4);
  const auto t = forward_full(in.image, in.init, params, 16.0);
  EXPECT_EQ(t.prop, in.init);
}

TEST(ForwardTest, RegimeSelectsBranches) {
  const Inputs in = inputs(1, 16, 5);
  const auto prop = forward_full(in.image, in.init, build_model(small(Regime::kPropOnly), 1), 8.0);
  EXPECT_FALSE(prop.prop.empty());
  EXPECT_TRUE(prop.repl.empty());
  EXPECT_TRUE(prop.fused.empty());
  EXPECT_EQ(&prop.output(), &prop.prop);
  const auto repl = forward_full(in.image, in.init, build_model(small(Regime::kReplOnly), 1), 8.0);
  EXPECT_TRUE(repl.prop.empty());
  EXPECT_FALSE(repl.repl.empty());
  EXPECT_EQ(&repl.output(), &repl.repl);
  const auto joint = build_model(small(), 1);
  const auto sub = forward_full(in.image, in.init, joint, 8.0, Regime::kPropOnly);
  EXPECT_EQ(sub.prop, prop.prop);
}

TEST(ForwardTest, RejectsBadInputs) {
  const auto params = build_model(small(), 4);
  const Inputs ok = inputs(1, 16, 6);
  const Inputs odd = inputs(1, 12, 6);
  EXPECT_THROW(forward_full(odd.image, odd.init, params, 8.0), ShapeError);
  Tensor bad_init = ok.init;
  bad_init[0] += 0.5f;
  EXPECT_THROW(forward_full(ok.image, bad_init, params, 8.0), ContractError);
  EXPECT_THROW(forward_full(random_tensor(Shape{1, 1, 16, 16}, 1), ok.init, params, 8.0),
               ShapeError);
  EXPECT_THROW(forward_full(ok.image, random_probmap(Shape{1, 3, 16, 16}, 2), params, 8.0),
               ShapeError);
}

TEST(BackwardTest, ZeroUpstreamGivesZeroGradients) {
  const auto params = build_model(small(), 5);
  const Inputs in = inputs(1, 16, 7);
  const auto t = forward_full(in.image, in.init, params, 8.0);
  const auto g = backward_full(
      t, OutputGrads<float>{Tensor(t.prop.shape()), Tensor(t.repl.shape()), Tensor(t.fused.shape())},
      params);
  ASSERT_EQ(g.layers().size(), params.layers().size());
  for (const auto& l : g.layers()) {
    for (const float v : l.weights.kernel.values()) EXPECT_EQ(v, 0.0f);
    for (const float v : l.weights.bias.values()) EXPECT_EQ(v, 0.0f);
  }
}

TEST(BackwardTest, Deterministic) {
  const auto params = build_model(small(), 6);
  const Inputs in = inputs(2, 16, 8);
  const auto t = forward_full(in.image, in.init, params, 8.0);
  const auto loss = total_loss(t.fused, t.prop, t.repl, in.gt);
  const OutputGrads<float> up{loss.d_prop, loss.d_repl, loss.d_fused};
  EXPECT_EQ(backward_full(t, up, params), backward_full(t, up, params));
}

TEST(BackwardTest, StaleTraceIsContractError) {
  auto params = build_model(small(), 7);
  const Inputs in = inputs(1, 16, 9);
  const auto t = forward_full(in.image, in.init, params, 8.0);
  const OutputGrads<float> up{Tensor(t.prop.shape()), Tensor(t.repl.shape()),
                              Tensor(t.fused.shape())};
  const auto copy = params;
  EXPECT_THROW(backward_full(t, up, copy), ContractError);
  params.bump_revision();
  EXPECT_THROW(backward_full(t, up, params), ContractError);
}

testing::ModelProbe probe16(std::uint64_t seed) {
  return {random_tensor<double>(Shape{1, 3, 16, 16}, seed),
          random_probmap<double>(Shape{1, 4, 16, 16}, seed + 1, 2.0),
          random_labels(1, 16, 16, 4, seed + 2), 4.0};
}

TEST(BackwardTest, WholeGraphGradientCheck) {
  for (const auto regime : {Regime::kJoint, Regime::kPropOnly, Regime::kReplOnly}) {
    const auto params = params_cast<double>(build_model(ModelSpec{4, 4, regime}, 8));
    EXPECT_LT(testing::check_model_gradients(params, probe16(10), 50, 11), 1e-3)
        << to_string(regime);
  }
}

}  // namespace
}  // namespace segrefine
