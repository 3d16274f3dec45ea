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

#include "segrefine/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "segrefine/error.hpp"

namespace segrefine {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Unfolds one (c, h, w) image into a (c * 9, h * w) patch matrix.
template <typename T>
void im2col(const T* src, std::size_t channels, std::size_t h, std::size_t w, T* col) {
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const T* in = src + ci * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* row = col + ((ci * 3 + ky) * 3 + kx) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          T* dst = row + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(dst, dst + w, T{0});
            continue;
          }
          const T* srow = in + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            dst[0] = T{0};
            std::copy(srow, srow + w - 1, dst + 1);
          } else if (kx == 1) {
            std::copy(srow, srow + w, dst);
          } else {
            std::copy(srow + 1, srow + w, dst);
            dst[w - 1] = T{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates patch-matrix gradients into the image.
template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t h, std::size_t w, T* dst) {
  const std::size_t plane = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    T* out = dst + ci * plane;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* row = col + ((ci * 3 + ky) * 3 + kx) * plane;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const T* g = row + y * w;
          T* orow = out + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            for (std::size_t x = 1; x < w; ++x) orow[x - 1] += g[x];
          } else if (kx == 1) {
            for (std::size_t x = 0; x < w; ++x) orow[x] += g[x];
          } else {
            for (std::size_t x = 0; x + 1 < w; ++x) orow[x + 1] += g[x];
          }
        }
      }
    }
  }
}

template <typename T>
AlignedVector<T>& scratch(std::size_t size) {
  thread_local AlignedVector<T> buffer;
  if (buffer.size() < size) buffer.resize(size);
  return buffer;
}

void check_conv_shapes(const Shape& in, const Shape& kernel, const Shape& bias) {
  if (kernel.h != 3 || kernel.w != 3) {
    throw ShapeError("conv2d: kernel must be 3x3, got " + kernel.str());
  }
  if (in.c != kernel.c) {
    throw ShapeError("conv2d: input has " + std::to_string(in.c) +
                     " channels, kernel expects " + std::to_string(kernel.c));
  }
  if (bias.count() != kernel.n) throw ShapeError("conv2d: bias length mismatch");
  if (in.h == 0 || in.w == 0) throw ShapeError("conv2d: empty spatial dims");
}

// Separable linear-interpolation table for one upsampled axis.
struct AxisTap {
  std::size_t i0;
  std::size_t i1;
  double frac;
};

std::vector<AxisTap> upsample_taps(std::size_t in_size) {
  std::vector<AxisTap> taps(in_size * 2);
  const double max_src = static_cast<double>(in_size - 1);
  for (std::size_t d = 0; d < taps.size(); ++d) {
    double s = (static_cast<double>(d) + 0.5) / 2.0 - 0.5;
    s = std::clamp(s, 0.0, max_src);
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    taps[d] = {i0, std::min(i0 + 1, in_size - 1), s - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const ConvWeights<T>& w) {
  const Shape& s = input.shape();
  check_conv_shapes(s, w.kernel.shape(), w.bias.shape());
  require_finite(input, "conv2d input");

  const std::size_t out_ch = w.out_channels();
  const std::size_t k = s.c * 9;
  const std::size_t plane = s.plane();
  BasicTensor<T> out(Shape{s.n, out_ch, s.h, s.w});
  auto& col = scratch<T>(k * plane);
  ConstMatrixMap<T> kernel(w.kernel.data(), static_cast<long>(out_ch), static_cast<long>(k));
  for (std::size_t b = 0; b < s.n; ++b) {
    im2col(input.plane(b, 0), s.c, s.h, s.w, col.data());
    ConstMatrixMap<T> patches(col.data(), static_cast<long>(k), static_cast<long>(plane));
    MatrixMap<T> result(out.plane(b, 0), static_cast<long>(out_ch), static_cast<long>(plane));
    result.noalias() = kernel * patches;
    for (std::size_t o = 0; o < out_ch; ++o) {
      result.row(static_cast<long>(o)).array() += w.bias[o];
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& input, const ConvWeights<T>& w,
                             const BasicTensor<T>& grad_out) {
  const Shape& s = input.shape();
  check_conv_shapes(s, w.kernel.shape(), w.bias.shape());
  const std::size_t out_ch = w.out_channels();
  require_same_shape(grad_out.shape(), Shape{s.n, out_ch, s.h, s.w}, "conv2d_backward");

  const std::size_t k = s.c * 9;
  const std::size_t plane = s.plane();
  ConvGrads<T> g{BasicTensor<T>(s), ConvWeights<T>(out_ch, s.c)};
  auto& col = scratch<T>(k * plane);
  AlignedVector<T> dcol(k * plane);
  ConstMatrixMap<T> kernel(w.kernel.data(), static_cast<long>(out_ch), static_cast<long>(k));
  MatrixMap<T> dkernel(g.weights.kernel.data(), static_cast<long>(out_ch),
                       static_cast<long>(k));
  for (std::size_t b = 0; b < s.n; ++b) {
    im2col(input.plane(b, 0), s.c, s.h, s.w, col.data());
    ConstMatrixMap<T> patches(col.data(), static_cast<long>(k), static_cast<long>(plane));
    ConstMatrixMap<T> dy(grad_out.plane(b, 0), static_cast<long>(out_ch),
                         static_cast<long>(plane));
    dkernel.noalias() += dy * patches.transpose();
    for (std::size_t o = 0; o < out_ch; ++o) {
      g.weights.bias[o] += dy.row(static_cast<long>(o)).sum();
    }
    MatrixMap<T> dpatches(dcol.data(), static_cast<long>(k), static_cast<long>(plane));
    dpatches.noalias() = kernel.transpose() * dy;
    col2im(dcol.data(), s.c, s.h, s.w, g.input.plane(b, 0));
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool2x2(const BasicTensor<T>& input) {
  const Shape& s = input.shape();
  if (s.h == 0 || s.w == 0) throw ShapeError("maxpool2x2: empty spatial dims");
  const std::size_t oh = (s.h + 1) / 2;
  const std::size_t ow = (s.w + 1) / 2;
  PoolResult<T> r{BasicTensor<T>(Shape{s.n, s.c, oh, ow}),
                  std::vector<std::uint32_t>(s.n * s.c * oh * ow), s};
  std::size_t o = 0;
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t ch = 0; ch < s.c; ++ch) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_idx = input.index(b, ch, 2 * oy, 2 * ox);
          for (std::size_t dy = 0; dy < 2; ++dy) {
            const std::size_t y = 2 * oy + dy;
            if (y >= s.h) continue;
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t x = 2 * ox + dx;
              if (x >= s.w) continue;
              const std::size_t idx = input.index(b, ch, y, x);
              if (input[idx] > best) {
                best = input[idx];
                best_idx = idx;
              }
            }
          }
          r.output[o] = input[best_idx];
          r.argmax[o] = static_cast<std::uint32_t>(best_idx);
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2x2_backward(const PoolResult<T>& pool,
                                   const BasicTensor<T>& grad_out) {
  require_same_shape(grad_out.shape(), pool.output.shape(), "maxpool2x2_backward");
  BasicTensor<T> grad(pool.input_shape);
  for (std::size_t i = 0; i < grad_out.size(); ++i) grad[pool.argmax[i]] += grad_out[i];
  return grad;
}

template <typename T>
BasicTensor<T> upsample_bilinear_2x(const BasicTensor<T>& input) {
  const Shape& s = input.shape();
  if (s.h == 0 || s.w == 0) throw ShapeError("upsample_bilinear_2x: empty spatial dims");
  const auto ty = upsample_taps(s.h);
  const auto tx = upsample_taps(s.w);
  BasicTensor<T> out(Shape{s.n, s.c, 2 * s.h, 2 * s.w});
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t ch = 0; ch < s.c; ++ch) {
      const T* in = input.plane(b, ch);
      T* dst = out.plane(b, ch);
      for (std::size_t y = 0; y < ty.size(); ++y) {
        const T fy = static_cast<T>(ty[y].frac);
        const T* r0 = in + ty[y].i0 * s.w;
        const T* r1 = in + ty[y].i1 * s.w;
        for (std::size_t x = 0; x < tx.size(); ++x) {
          const T fx = static_cast<T>(tx[x].frac);
          const T top = (1 - fx) * r0[tx[x].i0] + fx * r0[tx[x].i1];
          const T bot = (1 - fx) * r1[tx[x].i0] + fx * r1[tx[x].i1];
          dst[y * tx.size() + x] = (1 - fy) * top + fy * bot;
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_bilinear_2x_backward(const BasicTensor<T>& grad_out,
                                             const Shape& input_shape) {
  const Shape& s = input_shape;
  require_same_shape(grad_out.shape(), Shape{s.n, s.c, 2 * s.h, 2 * s.w},
                     "upsample_bilinear_2x_backward");
  const auto ty = upsample_taps(s.h);
  const auto tx = upsample_taps(s.w);
  BasicTensor<T> grad(s);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t ch = 0; ch < s.c; ++ch) {
      const T* g = grad_out.plane(b, ch);
      T* dst = grad.plane(b, ch);
      for (std::size_t y = 0; y < ty.size(); ++y) {
        const T fy = static_cast<T>(ty[y].frac);
        T* r0 = dst + ty[y].i0 * s.w;
        T* r1 = dst + ty[y].i1 * s.w;
        for (std::size_t x = 0; x < tx.size(); ++x) {
          const T fx = static_cast<T>(tx[x].frac);
          const T v = g[y * tx.size() + x];
          r0[tx[x].i0] += (1 - fy) * (1 - fx) * v;
          r0[tx[x].i1] += (1 - fy) * fx * v;
          r1[tx[x].i0] += fy * (1 - fx) * v;
          r1[tx[x].i1] += fy * fx * v;
        }
      }
    }
  }
  return grad;
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& input, Activation mode) {
  BasicTensor<T> out(input.shape());
  const auto in = input.values();
  auto dst = out.values();
  switch (mode) {
    case Activation::kNone:
      std::copy(in.begin(), in.end(), dst.begin());
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < in.size(); ++i) dst[i] = in[i] > T{0} ? in[i] : T{0};
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < in.size(); ++i) dst[i] = std::tanh(in[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) dst[i] = T{1} / (T{1} + std::exp(-in[i]));
      break;
  }
  return out;
}

template <typename T>
BasicTensor<T> activation_backward(const BasicTensor<T>& output,
                                   const BasicTensor<T>& grad_out, Activation mode) {
  require_same_shape(output.shape(), grad_out.shape(), "activation_backward");
  BasicTensor<T> grad(output.shape());
  const auto y = output.values();
  const auto g = grad_out.values();
  auto dst = grad.values();
  switch (mode) {
    case Activation::kNone:
      std::copy(g.begin(), g.end(), dst.begin());
      break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < y.size(); ++i) dst[i] = y[i] > T{0} ? g[i] : T{0};
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < y.size(); ++i) dst[i] = g[i] * (T{1} - y[i] * y[i]);
      break;
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) dst[i] = g[i] * y[i] * (T{1} - y[i]);
      break;
  }
  return grad;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits) {
  const Shape& s = logits.shape();
  if (s.c < 2) throw ShapeError("softmax_channels: needs at least 2 channels");
  BasicTensor<T> out(s);
  const std::size_t plane = s.plane();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      T mx = logits.plane(b, 0)[p];
      for (std::size_t ch = 1; ch < s.c; ++ch) mx = std::max(mx, logits.plane(b, ch)[p]);
      T sum = 0;
      for (std::size_t ch = 0; ch < s.c; ++ch) {
        const T e = std::exp(logits.plane(b, ch)[p] - mx);
        out.plane(b, ch)[p] = e;
        sum += e;
      }
      for (std::size_t ch = 0; ch < s.c; ++ch) out.plane(b, ch)[p] /= sum;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& output,
                                         const BasicTensor<T>& grad_out) {
  require_same_shape(output.shape(), grad_out.shape(), "softmax_channels_backward");
  const Shape& s = output.shape();
  BasicTensor<T> grad(s);
  const std::size_t plane = s.plane();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      T dot = 0;
      for (std::size_t ch = 0; ch < s.c; ++ch) {
        dot += output.plane(b, ch)[p] * grad_out.plane(b, ch)[p];
      }
      for (std::size_t ch = 0; ch < s.c; ++ch) {
        grad.plane(b, ch)[p] = output.plane(b, ch)[p] * (grad_out.plane(b, ch)[p] - dot);
      }
    }
  }
  return grad;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat_channels: " + sa.str() + " vs " + sb.str());
  }
  BasicTensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t ia = sa.c * sa.plane();
  const std::size_t ib = sb.c * sb.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    T* dst = out.plane(n, 0);
    std::copy_n(a.data() + n * ia, ia, dst);
    std::copy_n(b.data() + n * ib, ib, dst + ia);
  }
  return out;
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& t, std::size_t begin,
                              std::size_t count) {
  const Shape& s = t.shape();
  if (begin + count > s.c) throw ShapeError("slice_channels: range exceeds channels");
  BasicTensor<T> out(Shape{s.n, count, s.h, s.w});
  const std::size_t len = count * s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    std::copy_n(t.plane(n, begin), len, out.plane(n, 0));
  }
  return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& grad,
                                                         std::size_t a_channels) {
  return {slice_channels(grad, 0, a_channels),
          slice_channels(grad, a_channels, grad.c() - a_channels)};
}

#define SEGREFINE_INSTANTIATE(T)                                                     \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const ConvWeights<T>&);   \
  template ConvGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const ConvWeights<T>&, \
                                           const BasicTensor<T>&);                   \
  template PoolResult<T> maxpool2x2<T>(const BasicTensor<T>&);                       \
  template BasicTensor<T> maxpool2x2_backward<T>(const PoolResult<T>&,               \
                                                 const BasicTensor<T>&);             \
  template BasicTensor<T> upsample_bilinear_2x<T>(const BasicTensor<T>&);            \
  template BasicTensor<T> upsample_bilinear_2x_backward<T>(const BasicTensor<T>&,    \
                                                           const Shape&);            \
  template BasicTensor<T> activation<T>(const BasicTensor<T>&, Activation);          \
  template BasicTensor<T> activation_backward<T>(const BasicTensor<T>&,              \
                                                 const BasicTensor<T>&, Activation); \
  template BasicTensor<T> softmax_channels<T>(const BasicTensor<T>&);                \
  template BasicTensor<T> softmax_channels_backward<T>(const BasicTensor<T>&,        \
                                                       const BasicTensor<T>&);       \
  template BasicTensor<T> concat_channels<T>(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> slice_channels<T>(const BasicTensor<T>&, std::size_t,      \
                                            std::size_t);                            \
  template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels<T>(              \
      const BasicTensor<T>&, std::size_t);

SEGREFINE_INSTANTIATE(float)
SEGREFINE_INSTANTIATE(double)
#undef SEGREFINE_INSTANTIATE

}  // namespace segrefine
