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

// Branch ablation on synthetic data: trains the joint model and, optionally,
// each branch on its own, then scores every output against the corrupted
// input maps.

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "segrefine/data.hpp"
#include "segrefine/inference.hpp"
#include "segrefine/metrics.hpp"
#include "segrefine/optim.hpp"

namespace segrefine {

struct AblationConfig {
  std::uint64_t data_seed = 2024;
  std::size_t train_count = 200;
  std::size_t val_count = 50;
  std::size_t size = 64;
  CorruptionConfig corruption;
  /// Shared by every trained model; `regime` is overridden per run.
  TrainConfig train;
  std::vector<int> trimap_widths;
  bool single_branches = true;
};

/// Trimap mIoU per band width for the input maps and each joint-model output.
struct TrimapRow {
  int width = 0;
  std::optional<double> input;
  std::optional<double> prop;
  std::optional<double> repl;
  std::optional<double> fused;
};

struct AblationReport {
  double input_miou = 0.0;
  double joint_fused_miou = 0.0;
  double joint_prop_miou = 0.0;
  double joint_repl_miou = 0.0;
  std::optional<double> prop_only_miou;
  std::optional<double> repl_only_miou;
  std::vector<TrimapRow> trimap;
  std::vector<LogRow> joint_log;
};

/// The two synthetic splits used by the ablation (validation drawn from a
/// seed disjoint from training).
std::vector<Sample> ablation_train_set(const AblationConfig& config);
std::vector<Sample> ablation_val_set(const AblationConfig& config);

using StageFn = std::function<void(const std::string& stage, const LogRow& row)>;

AblationReport run_ablation(const AblationConfig& config, const StageFn& progress = {});

/// CSV with header width,miou_input,miou_prop,miou_repl,miou_fuse.
std::string trimap_to_csv(const std::vector<TrimapRow>& rows);

/// Scores the input maps and the joint model's three outputs on `val`.
std::vector<TrimapRow> trimap_rows(const Predictions& p, const std::vector<int>& widths,
                                   std::size_t num_classes);

}  // namespace segrefine
