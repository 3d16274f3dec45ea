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

// Flat run configuration: one key=value per line, '#' starts a comment.
//
//   regime           joint | prop_only | repl_only     (joint)
//   iterations       training iterations               (2000)
//   batch_size                                         (8)
//   lr               Adam step size                    (1e-4)
//   seed             model init, shuffling, augmentation (1)
//   max_disp_px      displacement scale, pixels        (16)
//   num_classes                                        (4)
//   width_divisor    1, 2, 4, 8 or 16                  (1)
//   mirror, rescale  augmentation switches, true/false (true)
//   min_scale, max_scale                               (0.5, 1.5)
//   crop_size                                          (64)
//   log_every, eval_every                              (20, 200)
//   diagnostic_checkpoint  written on divergence       (empty)
//   boundary_jitter_px, region_flip_rate, blur_sigma   (3, 0.15, 1)
//   data_seed        synthetic data seed               (2024)
//   train_count, val_count, image_size                 (200, 50, 64)
//   data_dir         directory with train/ and val/ written by `gen`;
//                    empty generates the data in memory (empty)
//   log_csv          training log path; empty skips it (empty)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "segrefine/data.hpp"
#include "segrefine/optim.hpp"

namespace segrefine {

struct RunConfig {
  TrainConfig train;
  CorruptionConfig corruption;
  std::uint64_t data_seed = 2024;
  std::size_t train_count = 200;
  std::size_t val_count = 50;
  std::size_t image_size = 64;
  std::string data_dir;
  std::string log_csv;
};

/// Parses key=value text on top of the defaults. Unknown keys, repeated
/// keys and malformed values throw ConfigError naming the line.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Every key with its current value, in a form parse_run_config accepts.
std::string to_text(const RunConfig& config);

}  // namespace segrefine
