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

#include "segrefine/warp.hpp"

#include <algorithm>
#include <cmath>

#include "segrefine/error.hpp"

namespace segrefine {
namespace {

// One axis of a bilinear sample: the two integer neighbours and the kernel
// value / kernel derivative for each.
template <typename T>
struct AxisSample {
  std::size_t k0;
  std::size_t k1;
  bool has_k1;
  T weight0;
  T weight1;
  T slope0;
  T slope1;
  bool clamped;
};

template <typename T>
T kernel_slope(T xk, T xs) {
  if (std::abs(xk - xs) >= T{1}) return T{0};
  return xk >= xs ? T{1} : T{-1};
}

template <typename T>
AxisSample<T> sample_axis(std::size_t dst, T disp, std::size_t size) {
  const T raw = static_cast<T>(dst) - disp;
  const T hi = static_cast<T>(size - 1);
  const T s = std::clamp(raw, T{0}, hi);
  AxisSample<T> a{};
  a.clamped = raw < T{0} || raw > hi;
  a.k0 = static_cast<std::size_t>(std::floor(s));
  a.k1 = a.k0 + 1;
  a.has_k1 = a.k1 < size;
  const T x0 = static_cast<T>(a.k0);
  const T x1 = static_cast<T>(a.k1);
  a.weight0 = std::max(T{0}, T{1} - std::abs(s - x0));
  a.slope0 = kernel_slope(x0, s);
  if (a.has_k1) {
    a.weight1 = std::max(T{0}, T{1} - std::abs(s - x1));
    a.slope1 = kernel_slope(x1, s);
  }
  return a;
}

void check_warp_shapes(const Shape& probs, const Shape& disp) {
  if (disp.c != 2 || disp.n != probs.n || disp.h != probs.h || disp.w != probs.w) {
    throw ShapeError("warp_bilinear: map " + probs.str() + " vs displacement " + disp.str());
  }
  if (probs.h == 0 || probs.w == 0) throw ShapeError("warp_bilinear: empty map");
}

}  // namespace

template <typename T>
BasicTensor<T> displacement_from_flow(const BasicTensor<T>& raw_flow, double max_disp_px) {
  if (raw_flow.c() != 2) throw ShapeError("displacement_from_flow: expects 2 channels");
  BasicTensor<T> out(raw_flow.shape());
  const T scale = static_cast<T>(max_disp_px);
  for (std::size_t i = 0; i < raw_flow.size(); ++i) {
    const T v = raw_flow[i];
    if (!(v >= T{-1} && v <= T{1})) {
      throw ContractError("displacement_from_flow: raw flow value outside [-1, 1] at index " +
                          std::to_string(i));
    }
    out[i] = v * scale;
  }
  return out;
}

template <typename T>
BasicTensor<T> displacement_from_flow_backward(const BasicTensor<T>& grad_disp,
                                               double max_disp_px) {
  BasicTensor<T> grad = grad_disp;
  grad *= static_cast<T>(max_disp_px);
  return grad;
}

template <typename T>
BasicTensor<T> warp_bilinear(const BasicTensor<T>& probs, const BasicTensor<T>& disp) {
  const Shape& s = probs.shape();
  check_warp_shapes(s, disp.shape());
  BasicTensor<T> out(s);
  for (std::size_t b = 0; b < s.n; ++b) {
    const T* dxs = disp.plane(b, 0);
    const T* dys = disp.plane(b, 1);
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        const std::size_t p = y * s.w + x;
        const auto ax = sample_axis(x, dxs[p], s.w);
        const auto ay = sample_axis(y, dys[p], s.h);
        for (std::size_t ch = 0; ch < s.c; ++ch) {
          const T* src = probs.plane(b, ch);
          const T* r0 = src + ay.k0 * s.w;
          T top = r0[ax.k0] * ax.weight0;
          if (ax.has_k1) top += r0[ax.k1] * ax.weight1;
          T v = top * ay.weight0;
          if (ay.has_k1) {
            const T* r1 = src + ay.k1 * s.w;
            T bot = r1[ax.k0] * ax.weight0;
            if (ax.has_k1) bot += r1[ax.k1] * ax.weight1;
            v += bot * ay.weight1;
          }
          out.plane(b, ch)[p] = v;
        }
      }
    }
  }
  return out;
}

template <typename T>
WarpGrads<T> warp_bilinear_backward(const BasicTensor<T>& probs, const BasicTensor<T>& disp,
                                    const BasicTensor<T>& grad_out) {
  const Shape& s = probs.shape();
  check_warp_shapes(s, disp.shape());
  require_same_shape(grad_out.shape(), s, "warp_bilinear_backward");
  WarpGrads<T> g{BasicTensor<T>(s), BasicTensor<T>(disp.shape())};
  for (std::size_t b = 0; b < s.n; ++b) {
    const T* dxs = disp.plane(b, 0);
    const T* dys = disp.plane(b, 1);
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        const std::size_t p = y * s.w + x;
        const auto ax = sample_axis(x, dxs[p], s.w);
        const auto ay = sample_axis(y, dys[p], s.h);
        T d_xs = 0;
        T d_ys = 0;
        for (std::size_t ch = 0; ch < s.c; ++ch) {
          const T go = grad_out.plane(b, ch)[p];
          const T* src = probs.plane(b, ch);
          T* dsrc = g.probs.plane(b, ch);
          const T s00 = src[ay.k0 * s.w + ax.k0];
          const T s01 = ax.has_k1 ? src[ay.k0 * s.w + ax.k1] : T{0};
          const T s10 = ay.has_k1 ? src[ay.k1 * s.w + ax.k0] : T{0};
          const T s11 = ax.has_k1 && ay.has_k1 ? src[ay.k1 * s.w + ax.k1] : T{0};

          dsrc[ay.k0 * s.w + ax.k0] += go * ax.weight0 * ay.weight0;
          if (ax.has_k1) dsrc[ay.k0 * s.w + ax.k1] += go * ax.weight1 * ay.weight0;
          if (ay.has_k1) {
            dsrc[ay.k1 * s.w + ax.k0] += go * ax.weight0 * ay.weight1;
            if (ax.has_k1) dsrc[ay.k1 * s.w + ax.k1] += go * ax.weight1 * ay.weight1;
          }

          d_xs += go * (ay.weight0 * (s00 * ax.slope0 + s01 * ax.slope1) +
                        ay.weight1 * (s10 * ax.slope0 + s11 * ax.slope1));
          d_ys += go * (ax.weight0 * (s00 * ay.slope0 + s10 * ay.slope1) +
                        ax.weight1 * (s01 * ay.slope0 + s11 * ay.slope1));
        }
        // xs = x - dx, so d/d(dx) = -d/d(xs) unless the border clamp is active.
        g.disp.plane(b, 0)[p] = ax.clamped ? T{0} : -d_xs;
        g.disp.plane(b, 1)[p] = ay.clamped ? T{0} : -d_ys;
      }
    }
  }
  return g;
}

#define SEGREFINE_INSTANTIATE(T)                                                       \
  template BasicTensor<T> displacement_from_flow<T>(const BasicTensor<T>&, double);    \
  template BasicTensor<T> displacement_from_flow_backward<T>(const BasicTensor<T>&,    \
                                                             double);                  \
  template BasicTensor<T> warp_bilinear<T>(const BasicTensor<T>&, const BasicTensor<T>&); \
  template WarpGrads<T> warp_bilinear_backward<T>(                                     \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);

SEGREFINE_INSTANTIATE(float)
SEGREFINE_INSTANTIATE(double)
#undef SEGREFINE_INSTANTIATE

}  // namespace segrefine
