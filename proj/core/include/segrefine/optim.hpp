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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segrefine/data.hpp"
#include "segrefine/networks.hpp"

namespace segrefine {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments exist only for the layers being trained; other layers of the
/// model are left untouched by adam_step.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  ModelParams<T> m;
  ModelParams<T> v;
};

/// Fresh state covering the layers of `params` that belong to `regime`.
template <typename T>
AdamState<T> make_adam_state(const ModelParams<T>& params, const AdamHyper& hyper,
                             Regime regime = Regime::kJoint);

/// One bias-corrected Adam update of `param` in place. `step` is the
/// 1-based step index after incrementing.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v,
                 std::uint64_t step, const AdamHyper& hyper);

/// Throws NumericError (without touching params or state) if any gradient
/// of a trained layer is non-finite.
template <typename T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, AdamState<T>& state);

struct TrainConfig {
  Regime regime = Regime::kJoint;
  std::size_t iterations = 2000;
  std::size_t batch_size = 8;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  double max_disp_px = 16.0;
  std::size_t num_classes = 4;
  std::size_t width_divisor = 1;
  AugmentConfig augment;
  std::size_t log_every = 20;
  /// 0 disables validation during training.
  std::size_t eval_every = 200;
  /// Where to write the last good model if training diverges; empty skips it.
  std::string diagnostic_checkpoint;
};

/// Throws ConfigError for invalid values.
void validate(const TrainConfig& config);

struct LogRow {
  std::size_t iter = 0;
  /// Means over the iterations since the previous row.
  double loss = 0.0;
  double loss_prop = 0.0;
  double loss_repl = 0.0;
  double loss_fuse = 0.0;
  std::optional<double> val_miou;
};

struct TrainResult {
  ModelParams<float> params;
  AdamState<float> adam;
  std::vector<LogRow> log;
};

/// CSV with header iter,loss,loss_prop,loss_repl,loss_fuse,val_miou. Loss
/// columns the regime does not use and rows without validation are empty.
std::string log_to_csv(const std::vector<LogRow>& log, Regime regime);

using ProgressFn = std::function<void(const LogRow&)>;

/// Trains the regime's model from `initial` (or a fresh Xavier model when
/// null). Layers outside the regime are carried through unchanged.
/// Reproducible from config.seed. Throws NumericError if the loss becomes
/// non-finite, after writing config.diagnostic_checkpoint when set.
TrainResult train(const TrainConfig& config, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const ModelParams<float>* initial = nullptr,
                  const ProgressFn& progress = {});

}  // namespace segrefine
