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

// File formats. All integers and floats are little-endian.
//
// Tensor record:
//   "DTF1" | u32 rank | rank x u32 dims | prod(dims) x f32, row-major
// Tensors are written with rank 4 (n, c, h, w); ranks 1-3 are accepted on
// read and padded with leading 1s.
//
// Checkpoint:
//   "SRCK" | u32 version (=1) | u32 num_classes | f32 max_disp_px |
//   u32 entry count | entries of (u16 name length, UTF-8 name, tensor record)
// Entry names: "<layer>.weight" (out, in, 3, 3) and "<layer>.bias"
// (1, out, 1, 1). Optional optimizer state uses "adam.m/<entry>",
// "adam.v/<entry>", "adam.step" (1 value) and "adam.hyper" (lr, beta1,
// beta2, eps).
//
// Label maps are binary PGM (P5, maxval 255); colour renderings are binary
// PPM (P6).

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "segrefine/data.hpp"
#include "segrefine/optim.hpp"
#include "segrefine/tensor.hpp"

namespace segrefine {

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t num_classes = 0;
  float max_disp_px = 16.0f;
  ModelParams<float> params;
  std::optional<AdamState<float>> adam;
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes a single label map (n must be 1).
void save_pgm(const std::filesystem::path& path, const LabelMap& labels);
LabelMap load_pgm(const std::filesystem::path& path);

struct RgbImage {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, row-major
};

void save_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage load_ppm(const std::filesystem::path& path);

/// Dataset directory: per sample "<id>.image.dtf", "<id>.gt.pgm" and
/// "<id>.init.dtf", ids zero-padded to five digits.
void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples);

/// Loads every sample of `dir` in id order. Throws DataError on a sample
/// with missing files or inconsistent shapes, and if the init maps do not
/// have `num_classes` channels.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, std::size_t num_classes);

/// 256-entry VOC colour map: bits of the label id spread over the high bits
/// of R, G and B in turn.
const std::array<std::array<std::uint8_t, 3>, 256>& label_palette();

RgbImage colorize(const LabelMap& labels);

/// Displacement field (1, 2, h, w) rendered with hue = direction and
/// brightness = magnitude / max_disp_px.
RgbImage displacement_to_rgb(const Tensor& disp, double max_disp_px);

}  // namespace segrefine
