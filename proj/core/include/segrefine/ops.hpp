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

// Differentiable tensor primitives. Every forward op has a paired backward
// that maps the upstream gradient to gradients w.r.t. its inputs. Ops are
// pure functions; all reductions run in a fixed order so results are
// bit-reproducible.

#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "segrefine/tensor.hpp"

namespace segrefine {

/// 3x3 convolution weights: kernel (out, in, 3, 3), bias (1, out, 1, 1).
template <typename T>
struct ConvWeights {
  BasicTensor<T> kernel;
  BasicTensor<T> bias;

  ConvWeights() = default;
  ConvWeights(std::size_t out_ch, std::size_t in_ch)
      : kernel(Shape{out_ch, in_ch, 3, 3}), bias(Shape{1, out_ch, 1, 1}) {}

  std::size_t out_channels() const { return kernel.n(); }
  std::size_t in_channels() const { return kernel.c(); }
  bool operator==(const ConvWeights&) const = default;
};

template <typename T>
struct ConvGrads {
  BasicTensor<T> input;
  ConvWeights<T> weights;
};

/// Stride-1 cross-correlation with one pixel of zero padding on each side.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvWeights<T>& w);

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvWeights<T>& w,
                             const BasicTensor<T>& grad_out);

template <typename T>
struct PoolResult {
  BasicTensor<T> output;
  /// Flat input index of the selected element for every output element.
  std::vector<std::uint32_t> argmax;
  Shape input_shape;
};

/// 2x2 max pooling, stride 2. Odd sizes are padded on the bottom/right with
/// -inf. Ties pick the first element in row-major scan order.
template <typename T>
PoolResult<T> maxpool2x2(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> maxpool2x2_backward(const PoolResult<T>& pool,
                                   const BasicTensor<T>& grad_out);

/// Doubles h and w. Output pixel d samples source s = (d + 0.5) / 2 - 0.5,
/// clamped to [0, size - 1].
template <typename T>
BasicTensor<T> upsample_bilinear_2x(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> upsample_bilinear_2x_backward(const BasicTensor<T>& grad_out,
                                             const Shape& input_shape);

enum class Activation { kNone, kRelu, kTanh, kSigmoid };

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation mode);

/// Uses the stored forward output, not the input.
template <typename T>
BasicTensor<T> activation_backward(const BasicTensor<T>& output,
                                   const BasicTensor<T>& grad_out, Activation mode);

/// Softmax across channels at each pixel (max-subtracted).
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits);

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& output,
                                         const BasicTensor<T>& grad_out);

/// Channel concatenation, a's channels first.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, std::size_t begin,
                              std::size_t count);

/// Splits a gradient of concat_channels back into (grad_a, grad_b).
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& grad,
                                                         std::size_t a_channels);

}  // namespace segrefine
