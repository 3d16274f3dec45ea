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

#include "segrefine/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "segrefine/error.hpp"

namespace segrefine {
namespace {

void check_same_size(const LabelMap& a, const LabelMap& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w) {
    throw ShapeError("label maps differ in size");
  }
}

int saturating_add(int d) { return d == kNoBoundary ? d : d + 1; }

}  // namespace

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt, std::uint8_t ignore_id,
                          const std::vector<std::uint8_t>& mask) {
  check_same_size(pred, gt);
  if (!mask.empty() && mask.size() != gt.size()) throw ShapeError("mask size mismatch");
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const auto g = gt.labels[i];
    if (g == ignore_id) continue;
    if (!mask.empty() && mask[i] == 0) continue;
    const auto p = pred.labels[i];
    if (g >= num_classes_ || p >= num_classes_) {
      throw DataError("label id outside [0, " + std::to_string(num_classes_) + ")");
    }
    ++counts_[g * num_classes_ + p];
  }
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::vector<std::optional<double>> ConfusionMatrix::per_class_iou() const {
  std::vector<std::optional<double>> out(num_classes_);
  for (std::size_t c = 0; c < num_classes_; ++c) {
    const std::uint64_t tp = at(c, c);
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    for (std::size_t k = 0; k < num_classes_; ++k) {
      if (k == c) continue;
      fn += at(c, k);
      fp += at(k, c);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom > 0) out[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

std::optional<double> ConfusionMatrix::mean_iou() const {
  double sum = 0.0;
  std::size_t present = 0;
  for (const auto& iou : per_class_iou()) {
    if (iou) {
      sum += *iou;
      ++present;
    }
  }
  if (present == 0) return std::nullopt;
  return sum / static_cast<double>(present);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) throw ShapeError("confusion matrix size mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

IouResult mean_iou(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes,
                   std::uint8_t ignore_id) {
  ConfusionMatrix cm(num_classes);
  cm.add(pred, gt, ignore_id);
  return {cm.per_class_iou(), cm.mean_iou()};
}

std::vector<std::uint8_t> boundary_pixels(const LabelMap& gt) {
  std::vector<std::uint8_t> out(gt.size(), 0);
  for (std::size_t b = 0; b < gt.n; ++b) {
    for (std::size_t y = 0; y < gt.h; ++y) {
      for (std::size_t x = 0; x < gt.w; ++x) {
        const auto v = gt.at(b, y, x);
        const bool edge = (x > 0 && gt.at(b, y, x - 1) != v) ||
                          (x + 1 < gt.w && gt.at(b, y, x + 1) != v) ||
                          (y > 0 && gt.at(b, y - 1, x) != v) ||
                          (y + 1 < gt.h && gt.at(b, y + 1, x) != v);
        out[(b * gt.h + y) * gt.w + x] = edge ? 1 : 0;
      }
    }
  }
  return out;
}

std::vector<int> boundary_distance(const LabelMap& gt) {
  // Two-pass chamfer transform with unit 8-neighbour steps, which is exact
  // for the chessboard metric.
  const auto edge = boundary_pixels(gt);
  std::vector<int> dist(gt.size(), kNoBoundary);
  const long h = static_cast<long>(gt.h);
  const long w = static_cast<long>(gt.w);
  for (std::size_t b = 0; b < gt.n; ++b) {
    int* d = dist.data() + b * gt.h * gt.w;
    const std::uint8_t* e = edge.data() + b * gt.h * gt.w;
    for (long i = 0; i < h * w; ++i) d[i] = e[i] ? 0 : kNoBoundary;
    auto relax = [&](long y, long x, long ny, long nx) {
      if (ny < 0 || nx < 0 || ny >= h || nx >= w) return;
      d[y * w + x] = std::min(d[y * w + x], saturating_add(d[ny * w + nx]));
    };
    for (long y = 0; y < h; ++y) {
      for (long x = 0; x < w; ++x) {
        relax(y, x, y - 1, x - 1);
        relax(y, x, y - 1, x);
        relax(y, x, y - 1, x + 1);
        relax(y, x, y, x - 1);
      }
    }
    for (long y = h - 1; y >= 0; --y) {
      for (long x = w - 1; x >= 0; --x) {
        relax(y, x, y + 1, x + 1);
        relax(y, x, y + 1, x);
        relax(y, x, y + 1, x - 1);
        relax(y, x, y, x + 1);
      }
    }
  }
  return dist;
}

std::vector<std::uint8_t> trimap_band(const std::vector<int>& distance, int width) {
  std::vector<std::uint8_t> band(distance.size(), 0);
  for (std::size_t i = 0; i < distance.size(); ++i) {
    band[i] = distance[i] != kNoBoundary && distance[i] < width ? 1 : 0;
  }
  return band;
}

TrimapAccumulator::TrimapAccumulator(std::vector<int> widths, std::size_t num_classes)
    : widths_(std::move(widths)) {
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    if (widths_[i] <= 0 || (i > 0 && widths_[i] <= widths_[i - 1])) {
      throw ConfigError("trimap widths must be positive and strictly ascending");
    }
  }
  matrices_.assign(widths_.size(), ConfusionMatrix(num_classes));
}

void TrimapAccumulator::add(const LabelMap& pred, const LabelMap& gt, std::uint8_t ignore_id) {
  check_same_size(pred, gt);
  const auto dist = boundary_distance(gt);
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    matrices_[i].add(pred, gt, ignore_id, trimap_band(dist, widths_[i]));
  }
}

std::vector<TrimapPoint> TrimapAccumulator::curve() const {
  std::vector<TrimapPoint> out;
  out.reserve(widths_.size());
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    out.push_back({widths_[i], matrices_[i].mean_iou()});
  }
  return out;
}

std::vector<TrimapPoint> trimap_curve(const LabelMap& pred, const LabelMap& gt,
                                      const std::vector<int>& widths, std::size_t num_classes,
                                      std::uint8_t ignore_id) {
  TrimapAccumulator acc(widths, num_classes);
  acc.add(pred, gt, ignore_id);
  return acc.curve();
}

FMeasure f_measure(const LabelMap& pred, const LabelMap& gt, const std::set<int>& group,
                   std::uint8_t ignore_id) {
  check_same_size(pred, gt);
  if (group.empty()) throw ConfigError("f_measure: class group must not be empty");
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.labels[i] == ignore_id) continue;
    const bool in_gt = group.contains(gt.labels[i]);
    const bool in_pred = group.contains(pred.labels[i]);
    if (in_gt && in_pred) ++tp;
    if (!in_gt && in_pred) ++fp;
    if (in_gt && !in_pred) ++fn;
  }
  FMeasure f;
  f.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  f.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  if (f.precision + f.recall == 0.0) {
    f.degenerate = true;
    return f;
  }
  f.f = 2.0 * f.precision * f.recall / (f.precision + f.recall);
  return f;
}

}  // namespace segrefine
