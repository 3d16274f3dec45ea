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

#include <optional>
#include <span>

#include "segrefine/data.hpp"
#include "segrefine/networks.hpp"

namespace segrefine {

/// Argmax label maps stacked over samples. Branches the model lacks are
/// left empty.
struct Predictions {
  LabelMap input;
  LabelMap prop;
  LabelMap repl;
  LabelMap fused;
  LabelMap gt;

  /// The prediction of the model's own regime.
  const LabelMap& output(Regime regime) const;
};

/// Runs `regime` (default: the regime implied by the model's layers).
Predictions predict(const ModelParams<float>& params, std::span<const Sample> samples,
                    double max_disp_px, std::optional<Regime> regime = std::nullopt,
                    std::size_t batch_size = 8);

/// Dataset-level mIoU (one confusion matrix over all samples) of the
/// regime's output.
std::optional<double> evaluate_miou(const ModelParams<float>& params,
                                    std::span<const Sample> samples, double max_disp_px,
                                    std::optional<Regime> regime = std::nullopt);

}  // namespace segrefine
