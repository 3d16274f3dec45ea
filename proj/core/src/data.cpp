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

#include "segrefine/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "segrefine/error.hpp"

namespace segrefine {
namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Class colour in [-1, 1]^3: hues evenly spaced over the foreground classes.
std::array<double, 3> class_color(std::size_t cls, std::size_t num_classes) {
  const double hue = 6.0 * static_cast<double>(cls - 1) / static_cast<double>(num_classes - 1);
  const double sat = 0.85;
  const double val = 0.95;
  const int sector = static_cast<int>(std::floor(hue)) % 6;
  const double f = hue - std::floor(hue);
  const double p = val * (1 - sat);
  const double q = val * (1 - sat * f);
  const double t = val * (1 - sat * (1 - f));
  std::array<double, 3> rgb{};
  switch (sector) {
    case 0: rgb = {val, t, p}; break;
    case 1: rgb = {q, val, p}; break;
    case 2: rgb = {p, val, t}; break;
    case 3: rgb = {p, q, val}; break;
    case 4: rgb = {t, p, val}; break;
    default: rgb = {val, p, q}; break;
  }
  for (auto& v : rgb) v = 2.0 * v - 1.0;
  return rgb;
}

struct ShapeGeom {
  enum Kind { kDisk, kRect, kTriangle } kind;
  double cx, cy, r;
  double cos_t, sin_t, half_a, half_b;
  std::array<double, 6> tri;

  bool contains(double x, double y) const {
    switch (kind) {
      case kDisk:
        return (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
      case kRect: {
        const double u = (x - cx) * cos_t + (y - cy) * sin_t;
        const double v = -(x - cx) * sin_t + (y - cy) * cos_t;
        return std::abs(u) <= half_a && std::abs(v) <= half_b;
      }
      case kTriangle: {
        auto edge = [&](int i, int j) {
          return (tri[2 * j] - tri[2 * i]) * (y - tri[2 * i + 1]) -
                 (tri[2 * j + 1] - tri[2 * i + 1]) * (x - tri[2 * i]);
        };
        const double e0 = edge(0, 1);
        const double e1 = edge(1, 2);
        const double e2 = edge(2, 0);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
    }
    return false;
  }
};

ShapeGeom random_shape(Rng& rng, double size) {
  ShapeGeom g{};
  g.kind = static_cast<ShapeGeom::Kind>(uniform_index(rng, 0, 2));
  g.r = uniform(rng, size / 8.0, size / 4.0);
  g.cx = uniform(rng, g.r * 0.5, size - g.r * 0.5);
  g.cy = uniform(rng, g.r * 0.5, size - g.r * 0.5);
  const double theta = uniform(rng, 0.0, std::numbers::pi);
  g.cos_t = std::cos(theta);
  g.sin_t = std::sin(theta);
  g.half_a = g.r * uniform(rng, 0.6, 1.0);
  g.half_b = g.r * uniform(rng, 0.4, 1.0);
  const double base = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  for (int k = 0; k < 3; ++k) {
    const double a = base + 2.0 * std::numbers::pi * k / 3.0 + uniform(rng, -0.4, 0.4);
    g.tri[2 * k] = g.cx + g.r * std::cos(a);
    g.tri[2 * k + 1] = g.cy + g.r * std::sin(a);
  }
  return g;
}

// Smooth displacement of bounded amplitude: a normalized sum of three
// low-frequency plane waves.
std::vector<double> smooth_field(Rng& rng, std::size_t h, std::size_t w, double amplitude) {
  struct Wave {
    double fx, fy, phase, weight;
  };
  std::array<Wave, 3> waves{};
  double total = 0.0;
  for (auto& wv : waves) {
    const double freq = uniform(rng, 0.5, 2.0);
    const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    wv = {freq * std::cos(dir) / static_cast<double>(w), freq * std::sin(dir) / static_cast<double>(h),
          uniform(rng, 0.0, 2.0 * std::numbers::pi), uniform(rng, 0.3, 1.0)};
    total += wv.weight;
  }
  std::vector<double> field(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& wv : waves) {
        v += wv.weight * std::sin(2.0 * std::numbers::pi * (wv.fx * x + wv.fy * y) + wv.phase);
      }
      field[y * w + x] = amplitude * v / total;
    }
  }
  return field;
}

void gaussian_blur(float* plane, std::size_t h, std::size_t w, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (auto& k : kernel) k /= sum;

  std::vector<double> tmp(h * w);
  const long lh = static_cast<long>(h);
  const long lw = static_cast<long>(w);
  for (long y = 0; y < lh; ++y) {
    for (long x = 0; x < lw; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const long sx = std::clamp(x + i, 0L, lw - 1);
        acc += kernel[i + radius] * plane[y * lw + sx];
      }
      tmp[y * lw + x] = acc;
    }
  }
  for (long y = 0; y < lh; ++y) {
    for (long x = 0; x < lw; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const long sy = std::clamp(y + i, 0L, lh - 1);
        acc += kernel[i + radius] * tmp[sy * lw + x];
      }
      plane[y * lw + x] = static_cast<float>(acc);
    }
  }
}

void renormalize(Tensor& probs) {
  const Shape& s = probs.shape();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < s.plane(); ++p) {
      double sum = 0.0;
      for (std::size_t ch = 0; ch < s.c; ++ch) sum += probs.plane(b, ch)[p];
      for (std::size_t ch = 0; ch < s.c; ++ch) {
        probs.plane(b, ch)[p] = static_cast<float>(probs.plane(b, ch)[p] / sum);
      }
    }
  }
}

void check_scene_args(std::size_t size, std::size_t num_classes) {
  if (size == 0 || size % 8 != 0) {
    throw ConfigError("scene size must be a positive multiple of 8, got " + std::to_string(size));
  }
  if (num_classes < 2 || num_classes > 254) {
    throw ConfigError("num_classes must be in [2, 254], got " + std::to_string(num_classes));
  }
}

Scene render_scene(std::uint64_t seed, std::size_t size, std::size_t num_classes,
                   bool with_shapes) {
  Rng rng(seed);
  Scene sc{Tensor(Shape{1, 3, size, size}), LabelMap(1, size, size, 0)};
  const double dsize = static_cast<double>(size);

  std::array<double, 3> bg{};
  for (auto& v : bg) v = uniform(rng, -0.35, 0.35);
  const double tex_f = uniform(rng, 2.0, 6.0);
  const double tex_dir = uniform(rng, 0.0, std::numbers::pi);
  const double tex_phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double t =
          0.15 * std::sin(2.0 * std::numbers::pi * tex_f *
                              (std::cos(tex_dir) * x + std::sin(tex_dir) * y) / dsize +
                          tex_phase);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        sc.image.at(0, ch, y, x) = static_cast<float>(bg[ch] + t);
      }
    }
  }

  if (with_shapes) {
    const std::size_t shapes = uniform_index(rng, 1, 3);
    for (std::size_t k = 0; k < shapes; ++k) {
      const std::size_t cls = uniform_index(rng, 1, num_classes - 1);
      const ShapeGeom g = random_shape(rng, dsize);
      auto color = class_color(cls, num_classes);
      for (auto& v : color) v += uniform(rng, -0.2, 0.2);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          int hits = 0;
          for (int sy = 0; sy < 4; ++sy) {
            for (int sx = 0; sx < 4; ++sx) {
              hits += g.contains(x + (sx + 0.5) / 4.0, y + (sy + 0.5) / 4.0) ? 1 : 0;
            }
          }
          if (hits > 0) {
            const double cover = hits / 16.0;
            for (std::size_t ch = 0; ch < 3; ++ch) {
              float& px = sc.image.at(0, ch, y, x);
              px = static_cast<float>(cover * color[ch] + (1.0 - cover) * px);
            }
          }
          if (g.contains(x + 0.5, y + 0.5)) sc.gt.at(0, y, x) = static_cast<std::uint8_t>(cls);
        }
      }
    }
  }
  for (auto& v : sc.image.values()) {
    v = static_cast<float>(std::clamp(v + noise(rng), -1.0, 1.0));
  }
  return sc;
}

Tensor resample_bilinear(const Tensor& t, std::size_t oh, std::size_t ow) {
  const Shape& s = t.shape();
  Tensor out(Shape{s.n, s.c, oh, ow});
  const double fy = static_cast<double>(s.h) / static_cast<double>(oh);
  const double fx = static_cast<double>(s.w) / static_cast<double>(ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const double sy = std::clamp((y + 0.5) * fy - 0.5, 0.0, static_cast<double>(s.h - 1));
    const auto y0 = static_cast<std::size_t>(sy);
    const std::size_t y1 = std::min(y0 + 1, s.h - 1);
    const double wy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      const double sx = std::clamp((x + 0.5) * fx - 0.5, 0.0, static_cast<double>(s.w - 1));
      const auto x0 = static_cast<std::size_t>(sx);
      const std::size_t x1 = std::min(x0 + 1, s.w - 1);
      const double wx = sx - static_cast<double>(x0);
      for (std::size_t b = 0; b < s.n; ++b) {
        for (std::size_t ch = 0; ch < s.c; ++ch) {
          const double top = (1 - wx) * t.at(b, ch, y0, x0) + wx * t.at(b, ch, y0, x1);
          const double bot = (1 - wx) * t.at(b, ch, y1, x0) + wx * t.at(b, ch, y1, x1);
          out.at(b, ch, y, x) = static_cast<float>((1 - wy) * top + wy * bot);
        }
      }
    }
  }
  return out;
}

LabelMap resample_nearest(const LabelMap& m, std::size_t oh, std::size_t ow) {
  LabelMap out(m.n, oh, ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const std::size_t sy = std::min(m.h - 1, y * m.h / oh);
    for (std::size_t x = 0; x < ow; ++x) {
      const std::size_t sx = std::min(m.w - 1, x * m.w / ow);
      for (std::size_t b = 0; b < m.n; ++b) out.at(b, y, x) = m.at(b, sy, sx);
    }
  }
  return out;
}

// Signed placement offset of a source of length `src` inside a crop of
// length `crop`: negative offsets crop, positive ones pad.
long placement(std::size_t src, std::size_t crop, double frac) {
  const long lo = std::min(0L, static_cast<long>(crop) - static_cast<long>(src));
  const long hi = std::max(0L, static_cast<long>(crop) - static_cast<long>(src));
  const long span = hi - lo + 1;
  const long pick = std::min(span - 1, static_cast<long>(std::floor(frac * span)));
  return lo + pick;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter) {
  // splitmix64 finalizer
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t validation_seed(std::uint64_t data_seed) { return derive_seed(data_seed, 0x7a1); }

std::vector<Scene> generate_synthetic(std::uint64_t seed, std::size_t count, std::size_t size,
                                      std::size_t num_classes, bool with_shapes) {
  check_scene_args(size, num_classes);
  std::vector<Scene> scenes;
  scenes.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    scenes.push_back(render_scene(derive_seed(seed, i), size, num_classes, with_shapes));
  }
  return scenes;
}

Tensor corrupt_segmentation(const LabelMap& gt, std::size_t num_classes,
                            const CorruptionConfig& config, std::uint64_t seed) {
  if (config.region_flip_rate < 0.0 || config.region_flip_rate > 1.0) {
    throw ConfigError("region_flip_rate must lie in [0, 1]");
  }
  if (config.boundary_jitter_px < 0.0 || config.blur_sigma < 0.0) {
    throw ConfigError("boundary_jitter_px and blur_sigma must be non-negative");
  }
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  Rng rng(seed);
  const std::size_t h = gt.h;
  const std::size_t w = gt.w;
  LabelMap labels = gt;

  for (std::size_t b = 0; b < gt.n; ++b) {
    // (a) boundary displacement
    if (config.boundary_jitter_px > 0.0) {
      const auto fx = smooth_field(rng, h, w, config.boundary_jitter_px);
      const auto fy = smooth_field(rng, h, w, config.boundary_jitter_px);
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const long sx = std::clamp(std::lround(x + fx[y * w + x]), 0L, static_cast<long>(w) - 1);
          const long sy = std::clamp(std::lround(y + fy[y * w + x]), 0L, static_cast<long>(h) - 1);
          labels.at(b, y, x) = gt.at(b, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        }
      }
    }

    // (b) component relabeling, components visited in scan order
    if (config.region_flip_rate > 0.0) {
      std::vector<int> comp(h * w, -1);
      std::vector<std::size_t> stack;
      std::bernoulli_distribution flip(config.region_flip_rate);
      int next = 0;
      for (std::size_t start = 0; start < h * w; ++start) {
        if (comp[start] >= 0) continue;
        const std::uint8_t id = labels.labels[b * h * w + start];
        std::vector<std::size_t> members;
        comp[start] = next;
        stack.push_back(start);
        while (!stack.empty()) {
          const std::size_t p = stack.back();
          stack.pop_back();
          members.push_back(p);
          const std::size_t y = p / w;
          const std::size_t x = p % w;
          auto visit = [&](std::size_t q) {
            if (comp[q] < 0 && labels.labels[b * h * w + q] == id) {
              comp[q] = next;
              stack.push_back(q);
            }
          };
          if (x > 0) visit(p - 1);
          if (x + 1 < w) visit(p + 1);
          if (y > 0) visit(p - w);
          if (y + 1 < h) visit(p + w);
        }
        ++next;
        if (id == LabelMap::kIgnore) continue;
        if (flip(rng)) {
          auto wrong = static_cast<std::uint8_t>(uniform_index(rng, 0, num_classes - 2));
          if (wrong >= id) ++wrong;
          for (const std::size_t p : members) labels.labels[b * h * w + p] = wrong;
        }
      }
    }
  }

  // (c) soften
  Tensor probs = one_hot(labels, num_classes);
  if (config.blur_sigma > 0.0) {
    for (std::size_t b = 0; b < gt.n; ++b) {
      for (std::size_t ch = 0; ch < num_classes; ++ch) {
        gaussian_blur(probs.plane(b, ch), h, w, config.blur_sigma);
      }
    }
    renormalize(probs);
  }
  return probs;
}

std::vector<Sample> make_dataset(std::uint64_t seed, std::size_t count, std::size_t size,
                                 std::size_t num_classes, const CorruptionConfig& corruption) {
  auto scenes = generate_synthetic(seed, count, size, num_classes);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor init = corrupt_segmentation(scenes[i].gt, num_classes, corruption,
                                       derive_seed(seed ^ 0xc0ffee, i));
    out.push_back({std::move(scenes[i].image), std::move(init), std::move(scenes[i].gt)});
  }
  return out;
}

AugmentDraw draw_augmentation(std::uint64_t seed, const AugmentConfig& config) {
  Rng rng(seed);
  AugmentDraw d;
  const bool flip = std::bernoulli_distribution(0.5)(rng);
  const double scale = uniform(rng, config.min_scale, config.max_scale);
  d.crop_frac_y = uniform(rng, 0.0, 1.0);
  d.crop_frac_x = uniform(rng, 0.0, 1.0);
  d.mirror = config.mirror && flip;
  d.scale = config.rescale ? scale : 1.0;
  return d;
}

Sample apply_augmentation(const Sample& sample, const AugmentDraw& draw, std::size_t crop_size) {
  Sample s = sample;
  const std::size_t num_classes = s.init.c();
  if (draw.mirror) {
    auto flip_tensor = [](Tensor& t) {
      for (std::size_t b = 0; b < t.n(); ++b) {
        for (std::size_t ch = 0; ch < t.c(); ++ch) {
          for (std::size_t y = 0; y < t.h(); ++y) {
            float* row = t.plane(b, ch) + y * t.w();
            std::reverse(row, row + t.w());
          }
        }
      }
    };
    flip_tensor(s.image);
    flip_tensor(s.init);
    for (std::size_t b = 0; b < s.gt.n; ++b) {
      for (std::size_t y = 0; y < s.gt.h; ++y) {
        auto row = s.gt.labels.begin() + static_cast<std::ptrdiff_t>((b * s.gt.h + y) * s.gt.w);
        std::reverse(row, row + static_cast<std::ptrdiff_t>(s.gt.w));
      }
    }
  }

  if (draw.scale != 1.0) {
    const auto oh = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s.gt.h * draw.scale)));
    const auto ow = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(s.gt.w * draw.scale)));
    s.image = resample_bilinear(s.image, oh, ow);
    s.init = resample_bilinear(s.init, oh, ow);
    renormalize(s.init);
    s.gt = resample_nearest(s.gt, oh, ow);
  }

  const std::size_t h = s.gt.h;
  const std::size_t w = s.gt.w;
  if (h == crop_size && w == crop_size) return s;

  const long oy = placement(h, crop_size, draw.crop_frac_y);
  const long ox = placement(w, crop_size, draw.crop_frac_x);
  const std::size_t n = s.gt.n;
  Sample out{Tensor(Shape{n, 3, crop_size, crop_size}),
             Tensor(Shape{n, num_classes, crop_size, crop_size}),
             LabelMap(n, crop_size, crop_size, 0)};
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < crop_size; ++y) {
      const long sy = static_cast<long>(y) - oy;
      for (std::size_t x = 0; x < crop_size; ++x) {
        const long sx = static_cast<long>(x) - ox;
        const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w);
        if (!inside) {
          out.init.at(b, 0, y, x) = 1.0f;
          continue;
        }
        const auto uy = static_cast<std::size_t>(sy);
        const auto ux = static_cast<std::size_t>(sx);
        for (std::size_t ch = 0; ch < 3; ++ch) out.image.at(b, ch, y, x) = s.image.at(b, ch, uy, ux);
        for (std::size_t ch = 0; ch < num_classes; ++ch) {
          out.init.at(b, ch, y, x) = s.init.at(b, ch, uy, ux);
        }
        out.gt.at(b, y, x) = s.gt.at(b, uy, ux);
      }
    }
  }
  return out;
}

Sample augment(const Sample& sample, std::uint64_t seed, const AugmentConfig& config) {
  return apply_augmentation(sample, draw_augmentation(seed, config), config.crop_size);
}

}  // namespace segrefine
