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

#include "segrefine/losses.hpp"

#include <algorithm>
#include <cmath>

#include "segrefine/error.hpp"

namespace segrefine {

std::string to_string(Regime r) {
  switch (r) {
    case Regime::kPropOnly:
      return "prop_only";
    case Regime::kReplOnly:
      return "repl_only";
    case Regime::kJoint:
      return "joint";
  }
  return "unknown";
}

Regime parse_regime(const std::string& s) {
  if (s == "prop_only") return Regime::kPropOnly;
  if (s == "repl_only") return Regime::kReplOnly;
  if (s == "joint") return Regime::kJoint;
  throw ConfigError("unknown regime '" + s + "' (expected prop_only, repl_only or joint)");
}

template <typename T>
LossResult<T> cross_entropy(const BasicTensor<T>& pred, const LabelMap& gt,
                            std::uint8_t ignore_id) {
  constexpr double kClamp = 1e-12;
  const Shape& s = pred.shape();
  if (gt.n != s.n || gt.h != s.h || gt.w != s.w) {
    throw ShapeError("cross_entropy: prediction " + s.str() + " vs labels (" +
                     std::to_string(gt.n) + "," + std::to_string(gt.h) + "," +
                     std::to_string(gt.w) + ")");
  }
  const std::size_t plane = s.plane();
  std::size_t valid = 0;
  for (const auto id : gt.labels) {
    if (id == ignore_id) continue;
    if (id >= s.c) {
      throw DataError("cross_entropy: label " + std::to_string(id) + " >= " +
                      std::to_string(s.c) + " classes");
    }
    ++valid;
  }

  LossResult<T> r{0.0, BasicTensor<T>(s)};
  if (valid == 0) return r;
  const double inv = 1.0 / static_cast<double>(valid);
  double sum = 0.0;
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const auto id = gt.labels[b * plane + p];
      if (id == ignore_id) continue;
      const double prob = std::max(static_cast<double>(pred.plane(b, id)[p]), kClamp);
      sum -= std::log(prob);
      r.grad.plane(b, id)[p] = static_cast<T>(-inv / prob);
    }
  }
  r.value = sum * inv;
  return r;
}

namespace {

void check_fuse_shapes(const Shape& prop, const Shape& repl, const Shape& mask) {
  require_same_shape(prop, repl, "fuse");
  if (mask.c != 1 || mask.n != prop.n || mask.h != prop.h || mask.w != prop.w) {
    throw ShapeError("fuse: mask " + mask.str() + " does not match " + prop.str());
  }
}

}  // namespace

template <typename T>
BasicTensor<T> fuse(const BasicTensor<T>& prop, const BasicTensor<T>& repl,
                    const BasicTensor<T>& mask) {
  check_fuse_shapes(prop.shape(), repl.shape(), mask.shape());
  for (const T v : mask.values()) {
    if (!(v >= T{0} && v <= T{1})) throw ContractError("fuse: mask value outside [0, 1]");
  }
  const Shape& s = prop.shape();
  BasicTensor<T> out(s);
  const std::size_t plane = s.plane();
  for (std::size_t b = 0; b < s.n; ++b) {
    const T* m = mask.plane(b, 0);
    for (std::size_t ch = 0; ch < s.c; ++ch) {
      const T* a = prop.plane(b, ch);
      const T* r = repl.plane(b, ch);
      T* dst = out.plane(b, ch);
      for (std::size_t p = 0; p < plane; ++p) {
        // Clipping to the inputs' interval only removes rounding overshoot.
        const T v = m[p] * a[p] + (T{1} - m[p]) * r[p];
        dst[p] = std::clamp(v, std::min(a[p], r[p]), std::max(a[p], r[p]));
      }
    }
  }
  return out;
}

template <typename T>
FuseGrads<T> fuse_backward(const BasicTensor<T>& prop, const BasicTensor<T>& repl,
                           const BasicTensor<T>& mask, const BasicTensor<T>& grad_out) {
  check_fuse_shapes(prop.shape(), repl.shape(), mask.shape());
  require_same_shape(grad_out.shape(), prop.shape(), "fuse_backward");
  const Shape& s = prop.shape();
  FuseGrads<T> g{BasicTensor<T>(s), BasicTensor<T>(s), BasicTensor<T>(mask.shape())};
  const std::size_t plane = s.plane();
  for (std::size_t b = 0; b < s.n; ++b) {
    const T* m = mask.plane(b, 0);
    T* dm = g.mask.plane(b, 0);
    for (std::size_t ch = 0; ch < s.c; ++ch) {
      const T* a = prop.plane(b, ch);
      const T* r = repl.plane(b, ch);
      const T* go = grad_out.plane(b, ch);
      T* da = g.prop.plane(b, ch);
      T* dr = g.repl.plane(b, ch);
      for (std::size_t p = 0; p < plane; ++p) {
        da[p] = m[p] * go[p];
        dr[p] = (T{1} - m[p]) * go[p];
        dm[p] += (a[p] - r[p]) * go[p];
      }
    }
  }
  return g;
}

template <typename T>
TotalLoss<T> total_loss(const BasicTensor<T>& fused, const BasicTensor<T>& prop,
                        const BasicTensor<T>& repl, const LabelMap& gt,
                        std::uint8_t ignore_id) {
  return regime_loss(Regime::kJoint, fused, prop, repl, gt, ignore_id);
}

template <typename T>
TotalLoss<T> regime_loss(Regime regime, const BasicTensor<T>& fused,
                         const BasicTensor<T>& prop, const BasicTensor<T>& repl,
                         const LabelMap& gt, std::uint8_t ignore_id) {
  TotalLoss<T> out;
  if (regime != Regime::kReplOnly) {
    auto l = cross_entropy(prop, gt, ignore_id);
    out.prop = l.value;
    out.d_prop = std::move(l.grad);
  }
  if (regime != Regime::kPropOnly) {
    auto l = cross_entropy(repl, gt, ignore_id);
    out.repl = l.value;
    out.d_repl = std::move(l.grad);
  }
  if (regime == Regime::kJoint) {
    auto l = cross_entropy(fused, gt, ignore_id);
    out.fused = l.value;
    out.d_fused = std::move(l.grad);
  }
  out.total = out.fused + out.prop + out.repl;
  return out;
}

#define SEGREFINE_INSTANTIATE(T)                                                        \
  template LossResult<T> cross_entropy<T>(const BasicTensor<T>&, const LabelMap&,       \
                                          std::uint8_t);                                \
  template BasicTensor<T> fuse<T>(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                  const BasicTensor<T>&);                               \
  template FuseGrads<T> fuse_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&,  \
                                         const BasicTensor<T>&, const BasicTensor<T>&); \
  template TotalLoss<T> total_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&,     \
                                      const BasicTensor<T>&, const LabelMap&,           \
                                      std::uint8_t);                                    \
  template TotalLoss<T> regime_loss<T>(Regime, const BasicTensor<T>&,                   \
                                       const BasicTensor<T>&, const BasicTensor<T>&,    \
                                       const LabelMap&, std::uint8_t);

SEGREFINE_INSTANTIATE(float)
SEGREFINE_INSTANTIATE(double)
#undef SEGREFINE_INSTANTIATE

}  // namespace segrefine
