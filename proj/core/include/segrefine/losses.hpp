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

#pragma once

#include <cstdint>
#include <string>

#include "segrefine/tensor.hpp"

namespace segrefine {

/// Which branches are built and which loss terms are minimized.
enum class Regime {
  kPropOnly,  // label propagation branch alone
  kReplOnly,  // label replacement branch alone
  kJoint,     // both branches plus the fusion head
};

std::string to_string(Regime r);
/// Accepts "prop_only", "repl_only", "joint". Throws ConfigError otherwise.
Regime parse_regime(const std::string& s);

template <typename T>
struct LossResult {
  double value = 0.0;
  BasicTensor<T> grad;
};

/// Mean over non-ignored pixels of -log(max(p[gt], 1e-12)). Zero (with zero
/// gradient) when every pixel is ignored. Throws DataError for a label id
/// >= the channel count.
template <typename T>
LossResult<T> cross_entropy(const BasicTensor<T>& pred, const LabelMap& gt,
                            std::uint8_t ignore_id = LabelMap::kIgnore);

/// mask * prop + (1 - mask) * repl, with the 1-channel mask broadcast over
/// classes.
template <typename T>
BasicTensor<T> fuse(const BasicTensor<T>& prop, const BasicTensor<T>& repl,
                    const BasicTensor<T>& mask);

template <typename T>
struct FuseGrads {
  BasicTensor<T> prop;
  BasicTensor<T> repl;
  BasicTensor<T> mask;
};

template <typename T>
FuseGrads<T> fuse_backward(const BasicTensor<T>& prop, const BasicTensor<T>& repl,
                           const BasicTensor<T>& mask, const BasicTensor<T>& grad_out);

/// Loss terms and their gradients w.r.t. each branch output. Terms that do
/// not take part in the regime are zero and their gradients empty.
template <typename T>
struct TotalLoss {
  double total = 0.0;
  double prop = 0.0;
  double repl = 0.0;
  double fused = 0.0;
  BasicTensor<T> d_prop;
  BasicTensor<T> d_repl;
  BasicTensor<T> d_fused;
};

/// L(gt, fused) + L(gt, prop) + L(gt, repl) with unit weights.
template <typename T>
TotalLoss<T> total_loss(const BasicTensor<T>& fused, const BasicTensor<T>& prop,
                        const BasicTensor<T>& repl, const LabelMap& gt,
                        std::uint8_t ignore_id = LabelMap::kIgnore);

/// The objective minimized by a regime: L(gt, prop) for kPropOnly,
/// L(gt, repl) for kReplOnly, total_loss for kJoint. Unused inputs may be
/// empty tensors.
template <typename T>
TotalLoss<T> regime_loss(Regime regime, const BasicTensor<T>& fused,
                         const BasicTensor<T>& prop, const BasicTensor<T>& repl,
                         const LabelMap& gt, std::uint8_t ignore_id = LabelMap::kIgnore);

}  // namespace segrefine
