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

#include "segrefine/inference.hpp"

#include <algorithm>

#include "segrefine/error.hpp"
#include "segrefine/metrics.hpp"

namespace segrefine {
namespace {

void append(LabelMap& acc, const LabelMap& part) {
  if (acc.n == 0) {
    acc = part;
    return;
  }
  acc.n += part.n;
  acc.labels.insert(acc.labels.end(), part.labels.begin(), part.labels.end());
}

}  // namespace

const LabelMap& Predictions::output(Regime regime) const {
  switch (regime) {
    case Regime::kPropOnly:
      return prop;
    case Regime::kReplOnly:
      return repl;
    case Regime::kJoint:
      return fused;
  }
  return fused;
}

Predictions predict(const ModelParams<float>& params, std::span<const Sample> samples,
                    double max_disp_px, std::optional<Regime> regime_override,
                    std::size_t batch_size) {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  Predictions out;
  const Regime regime = regime_override.value_or(params.regime());
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    std::vector<Tensor> images, inits;
    std::vector<LabelMap> gts;
    for (std::size_t i = begin; i < end; ++i) {
      images.push_back(samples[i].image);
      inits.push_back(samples[i].init);
      gts.push_back(samples[i].gt);
    }
    const Tensor image = stack_batch<float>(images);
    const Tensor init = stack_batch<float>(inits);
    const auto trace = forward_full(image, init, params, max_disp_px, regime);
    append(out.input, argmax_labels(init));
    append(out.gt, stack_labels(gts));
    if (!trace.prop.empty()) append(out.prop, argmax_labels(trace.prop));
    if (!trace.repl.empty()) append(out.repl, argmax_labels(trace.repl));
    if (!trace.fused.empty()) append(out.fused, argmax_labels(trace.fused));
  }
  return out;
}

std::optional<double> evaluate_miou(const ModelParams<float>& params,
                                    std::span<const Sample> samples, double max_disp_px,
                                    std::optional<Regime> regime) {
  if (samples.empty()) return std::nullopt;
  const Regime r = regime.value_or(params.regime());
  const Predictions p = predict(params, samples, max_disp_px, r);
  return mean_iou(p.output(r), p.gt, params.num_classes()).miou;
}

}  // namespace segrefine
