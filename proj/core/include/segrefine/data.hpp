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

// Synthetic refinement data. A scene is an RGB image with 1-3 anti-aliased
// shapes over a textured background plus its exact label map; an initial
// probability map is derived from the labels by controlled corruption that
// mimics the boundary and region errors of an upstream segmenter.

#pragma once

#include <cstdint>
#include <vector>

#include "segrefine/tensor.hpp"

namespace segrefine {

/// image (1, 3, h, w) in [-1, 1]; init (1, K, h, w) probability map; gt (1, h, w).
struct Sample {
  Tensor image;
  Tensor init;
  LabelMap gt;
};

struct Scene {
  Tensor image;
  LabelMap gt;
};

struct CorruptionConfig {
  /// Amplitude of the smooth random boundary displacement, pixels.
  double boundary_jitter_px = 3.0;
  /// Probability of relabeling each connected component to a wrong class.
  double region_flip_rate = 0.15;
  /// Gaussian smoothing of the one-hot map; 0 disables it.
  double blur_sigma = 1.0;
};

struct AugmentConfig {
  bool mirror = true;
  bool rescale = true;
  double min_scale = 0.5;
  double max_scale = 1.5;
  std::size_t crop_size = 64;
};

/// One random augmentation. Crop fractions in [0, 1) select the crop (or
/// padding) offset within the admissible range.
struct AugmentDraw {
  bool mirror = false;
  double scale = 1.0;
  double crop_frac_y = 0.0;
  double crop_frac_x = 0.0;
};

/// Stable per-item seed derived from a base seed and a counter.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter);

/// Seed of the validation split that accompanies a training split generated
/// from `data_seed`.
std::uint64_t validation_seed(std::uint64_t data_seed);

/// `count` scenes of size x size pixels. Throws ConfigError unless size is a
/// positive multiple of 8 and num_classes >= 2. Class 0 is background.
std::vector<Scene> generate_synthetic(std::uint64_t seed, std::size_t count, std::size_t size,
                                      std::size_t num_classes, bool with_shapes = true);

/// Initial probability map emulating an imperfect segmenter: boundary
/// displacement, component relabeling, then Gaussian smoothing.
Tensor corrupt_segmentation(const LabelMap& gt, std::size_t num_classes,
                            const CorruptionConfig& config, std::uint64_t seed);

/// Scenes plus corrupted initial maps, each sample seeded independently.
std::vector<Sample> make_dataset(std::uint64_t seed, std::size_t count, std::size_t size,
                                 std::size_t num_classes, const CorruptionConfig& corruption);

AugmentDraw draw_augmentation(std::uint64_t seed, const AugmentConfig& config);

/// Mirror, rescale (bilinear for image and map, nearest for labels), then
/// crop or background-pad to crop_size. The map is renormalized after
/// resampling. A draw with scale 1, no mirror and an equal-size crop is the
/// identity.
Sample apply_augmentation(const Sample& sample, const AugmentDraw& draw, std::size_t crop_size);

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config);

}  // namespace segrefine
