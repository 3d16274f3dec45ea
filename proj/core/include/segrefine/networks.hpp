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

// The refinement model: a shared encoder over (image, initial probability
// map), a propagation decoder E that predicts a displacement field used to
// warp the initial map, a replacement decoder C that predicts a new class
// distribution, and a fusion head M whose 1-channel mask blends the two.
//
// Layer names and channel counts:
//
//   conv1_1 (3+K)->64, conv1_2 64->64, pool,
//   conv2_1 64->128, conv2_2 128->128, pool,
//   conv3_1 128->256, conv3_2 256->256, pool,
//   conv4_1 256->256, conv4_2 256->256, upsample,
//   skip1 = [upsample, conv3_2]                               (512)
//   {E,C}_conv1_1 512->256, {E,C}_conv1_2 256->256, upsample,
//   skip2 = [upsample, conv2_2]                               (384)
//   {E,C}_conv2_1 384->128, {E,C}_conv2_2 128->128, upsample,
//   skip3 = [upsample, conv1_2]                               (192)
//   {E,C}_conv3_1 192->64, {E,C}_conv3_2 64->64,
//   flow 64->2 (tanh), C_out 64->K (softmax applied afterwards),
//   M_conv1 [E_conv3_2, C_conv3_2] 128->64, M_conv2 64->64,
//   M_conv3 64->256, mask 256->1 (sigmoid).
//
// Every convolution is 3x3 with ReLU unless noted. A width divisor scales
// every hidden channel count down uniformly for CPU-budget experiments.

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "segrefine/losses.hpp"
#include "segrefine/ops.hpp"
#include "segrefine/tensor.hpp"

namespace segrefine {

struct ModelSpec {
  std::size_t num_classes = 4;
  /// Hidden channel counts are divided by this; 1 is the reference width.
  std::size_t width_divisor = 1;
  Regime regime = Regime::kJoint;
};

struct LayerDef {
  std::string name;
  std::size_t in_channels;
  std::size_t out_channels;
  Activation act;
};

/// Layers of the model described by `spec`, in canonical order. Throws
/// ConfigError for num_classes < 2 or an unsupported width divisor.
std::vector<LayerDef> layer_plan(const ModelSpec& spec);

template <typename T>
class ModelParams {
 public:
  struct Layer {
    std::string name;
    ConvWeights<T> weights;
    bool operator==(const Layer&) const = default;
  };

  ModelParams() = default;
  explicit ModelParams(std::vector<Layer> layers);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  bool contains(std::string_view name) const { return find(name) != nullptr; }
  const ConvWeights<T>* find(std::string_view name) const;
  ConvWeights<T>* find(std::string_view name);
  /// Throws ContractError if the layer is missing.
  const ConvWeights<T>& at(std::string_view name) const;
  ConvWeights<T>& at(std::string_view name);

  std::size_t num_classes() const;
  std::size_t width_divisor() const;
  /// Regime implied by which branches are present.
  Regime regime() const;
  std::size_t parameter_count() const;

  /// Incremented whenever the values change through the optimizer; forward
  /// traces remember it so stale traces are rejected.
  std::uint64_t revision() const { return revision_; }
  void bump_revision() { ++revision_; }

  /// Same layers, all values zero.
  ModelParams zeros_like() const;

  bool operator==(const ModelParams& other) const { return layers_ == other.layers_; }

 private:
  std::vector<Layer> layers_;
  std::uint64_t revision_ = 0;
};

template <typename To, typename From>
ModelParams<To> params_cast(const ModelParams<From>& p) {
  std::vector<typename ModelParams<To>::Layer> layers;
  layers.reserve(p.layers().size());
  for (const auto& l : p.layers()) {
    ConvWeights<To> w;
    w.kernel = tensor_cast<To>(l.weights.kernel);
    w.bias = tensor_cast<To>(l.weights.bias);
    layers.push_back({l.name, std::move(w)});
  }
  return ModelParams<To>(std::move(layers));
}

/// Xavier-uniform kernels, zero biases. Values for a given layer depend only
/// on the seed, so the shared layers of every regime start identical.
ModelParams<float> build_model(const ModelSpec& spec, std::uint64_t seed);
ModelParams<float> build_model(std::size_t num_classes, std::uint64_t seed);

template <typename T>
struct ForwardTrace {
  struct LayerCache {
    std::string name;
    Activation act;
    BasicTensor<T> input;
    BasicTensor<T> output;
  };

  Regime regime = Regime::kJoint;
  double max_disp_px = 0.0;
  const ModelParams<T>* params = nullptr;
  std::uint64_t revision = 0;

  BasicTensor<T> init;
  std::vector<LayerCache> layers;
  std::vector<PoolResult<T>> pools;

  BasicTensor<T> flow_raw;
  BasicTensor<T> displacement;
  BasicTensor<T> prop;
  BasicTensor<T> repl_logits;
  BasicTensor<T> repl;
  BasicTensor<T> mask;
  BasicTensor<T> fused;

  const LayerCache& layer(std::string_view name) const;
  /// The regime's final prediction: prop, repl or fused.
  const BasicTensor<T>& output() const;
};

/// Upstream gradients w.r.t. the branch outputs; empty tensors mean zero.
template <typename T>
struct OutputGrads {
  BasicTensor<T> prop;
  BasicTensor<T> repl;
  BasicTensor<T> fused;
};

/// `image` is (n, 3, h, w) in [-1, 1]; `init` a valid probability map with
/// num_classes channels. h and w must be multiples of 8. Runs the branches
/// present in `params` (or the subset selected by `regime`).
template <typename T>
ForwardTrace<T> forward_full(const BasicTensor<T>& image, const BasicTensor<T>& init,
                             const ModelParams<T>& params, double max_disp_px);
template <typename T>
ForwardTrace<T> forward_full(const BasicTensor<T>& image, const BasicTensor<T>& init,
                             const ModelParams<T>& params, double max_disp_px,
                             Regime regime);

/// Gradients for every layer of `params` (layers outside the trace's regime
/// get zero). Throws ContractError if the trace was produced from another
/// parameter object or an older revision.
template <typename T>
ModelParams<T> backward_full(const ForwardTrace<T>& trace, const OutputGrads<T>& grads,
                             const ModelParams<T>& params);

}  // namespace segrefine
