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

// Label propagation by differentiable bilinear resampling.
//
// A displacement field is an (n, 2, h, w) tensor in pixel units: channel 0
// holds dx (horizontal), channel 1 holds dy (vertical). Output pixel (x, y)
// reads the source map at (x - dx, y - dy), clamped to the image border, and
// interpolates over the four integer neighbours of that location with
// weights (1 - |xs - xk|)(1 - |ys - yk|).

#pragma once

#include "segrefine/tensor.hpp"

namespace segrefine {

/// Scales the flow head's tanh output (values in [-1, 1]) to pixels.
/// Throws ContractError if a value lies outside [-1, 1].
template <typename T>
BasicTensor<T> displacement_from_flow(const BasicTensor<T>& raw_flow, double max_disp_px);

template <typename T>
BasicTensor<T> displacement_from_flow_backward(const BasicTensor<T>& grad_disp,
                                               double max_disp_px);

template <typename T>
BasicTensor<T> warp_bilinear(const BasicTensor<T>& probs, const BasicTensor<T>& disp);

template <typename T>
struct WarpGrads {
  BasicTensor<T> probs;
  BasicTensor<T> disp;
};

/// The kernel derivative w.r.t. the sample coordinate is +1 for neighbours
/// at or right of (below) the sample, -1 otherwise, and 0 for neighbours a
/// full pixel away. Clamped coordinates receive no displacement gradient.
template <typename T>
WarpGrads<T> warp_bilinear_backward(const BasicTensor<T>& probs, const BasicTensor<T>& disp,
                                    const BasicTensor<T>& grad_out);

}  // namespace segrefine
