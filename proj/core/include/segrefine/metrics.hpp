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
#include <limits>
#include <optional>
#include <set>
#include <vector>

#include "segrefine/tensor.hpp"

namespace segrefine {

/// Rows are ground-truth classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes)
      : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {}

  /// Counts every pixel whose gt is not `ignore_id`. `mask`, when non-empty,
  /// restricts counting to pixels where it is non-zero.
  void add(const LabelMap& pred, const LabelMap& gt, std::uint8_t ignore_id = LabelMap::kIgnore,
           const std::vector<std::uint8_t>& mask = {});

  std::uint64_t at(std::size_t gt, std::size_t pred) const {
    return counts_[gt * num_classes_ + pred];
  }
  std::uint64_t total() const;
  std::size_t num_classes() const { return num_classes_; }

  /// TP / (TP + FP + FN); nullopt for classes absent from both maps.
  std::vector<std::optional<double>> per_class_iou() const;
  /// Mean over present classes; nullopt when nothing was counted.
  std::optional<double> mean_iou() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

 private:
  std::size_t num_classes_;
  std::vector<std::uint64_t> counts_;
};

struct IouResult {
  std::vector<std::optional<double>> per_class;
  std::optional<double> miou;
};

IouResult mean_iou(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes,
                   std::uint8_t ignore_id = LabelMap::kIgnore);

/// Pixels with a 4-neighbour carrying a different gt label.
std::vector<std::uint8_t> boundary_pixels(const LabelMap& gt);

inline constexpr int kNoBoundary = std::numeric_limits<int>::max();

/// Chessboard distance of every pixel to the nearest boundary pixel of its
/// image (0 on the boundary itself, kNoBoundary if the image has none).
std::vector<int> boundary_distance(const LabelMap& gt);

/// Trimap band of width `width`: pixels within chessboard distance
/// width - 1 of a boundary pixel, so width 1 is the boundary itself.
std::vector<std::uint8_t> trimap_band(const std::vector<int>& distance, int width);

struct TrimapPoint {
  int width;
  std::optional<double> miou;
};

/// mIoU restricted to each trimap band. `widths` must be positive and
/// ascending.
std::vector<TrimapPoint> trimap_curve(const LabelMap& pred, const LabelMap& gt,
                                      const std::vector<int>& widths, std::size_t num_classes,
                                      std::uint8_t ignore_id = LabelMap::kIgnore);

/// Accumulates one confusion matrix per band width across images.
class TrimapAccumulator {
 public:
  TrimapAccumulator(std::vector<int> widths, std::size_t num_classes);
  void add(const LabelMap& pred, const LabelMap& gt, std::uint8_t ignore_id = LabelMap::kIgnore);
  std::vector<TrimapPoint> curve() const;

 private:
  std::vector<int> widths_;
  std::vector<ConfusionMatrix> matrices_;
};

struct FMeasure {
  double f = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  /// Set when precision + recall = 0 (e.g. group absent from both maps).
  bool degenerate = false;
};

/// Binarizes both maps to membership in `group` and returns 2PR / (P + R).
FMeasure f_measure(const LabelMap& pred, const LabelMap& gt, const std::set<int>& group,
                   std::uint8_t ignore_id = LabelMap::kIgnore);

}  // namespace segrefine
