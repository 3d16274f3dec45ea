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

#include "segrefine/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "segrefine/error.hpp"

namespace segrefine {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape_.count()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_.str());
  }
}

template <typename T>
void BasicTensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](T v) { return std::isfinite(v); });
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::operator+=(const BasicTensor& other) {
  require_same_shape(shape_, other.shape_, "tensor +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

template <typename T>
BasicTensor<T>& BasicTensor<T>::operator*=(T s) {
  for (auto& v : data_) v *= s;
  return *this;
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* what) {
  const auto vals = t.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!std::isfinite(vals[i])) {
      throw NumericError(std::string(what) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " +
                     b.str());
  }
}

template <typename T>
LabelMap argmax_labels(const BasicTensor<T>& probs) {
  const Shape& s = probs.shape();
  LabelMap out(s.n, s.h, s.w);
  const std::size_t plane = s.plane();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      std::size_t best = 0;
      T best_v = probs.plane(b, 0)[p];
      for (std::size_t ch = 1; ch < s.c; ++ch) {
        const T v = probs.plane(b, ch)[p];
        if (v > best_v) {
          best_v = v;
          best = ch;
        }
      }
      out.labels[b * plane + p] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

Tensor one_hot(const LabelMap& labels, std::size_t num_classes) {
  Tensor out(Shape{labels.n, num_classes, labels.h, labels.w});
  const std::size_t plane = labels.h * labels.w;
  const float uniform = 1.0f / static_cast<float>(num_classes);
  for (std::size_t b = 0; b < labels.n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      const auto id = labels.labels[b * plane + p];
      if (id == LabelMap::kIgnore) {
        for (std::size_t ch = 0; ch < num_classes; ++ch) out.plane(b, ch)[p] = uniform;
      } else if (id < num_classes) {
        out.plane(b, id)[p] = 1.0f;
      } else {
        throw DataError("label id " + std::to_string(id) + " >= num_classes " +
                        std::to_string(num_classes));
      }
    }
  }
  return out;
}

template <typename T>
bool is_prob_map(const BasicTensor<T>& t, double tol) {
  const Shape& s = t.shape();
  if (s.c == 0) return false;
  const std::size_t plane = s.plane();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t p = 0; p < plane; ++p) {
      double sum = 0.0;
      for (std::size_t ch = 0; ch < s.c; ++ch) {
        const double v = t.plane(b, ch)[p];
        if (!(v >= 0.0 && v <= 1.0)) return false;
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol) return false;
    }
  }
  return true;
}

template <typename T>
BasicTensor<T> batch_item(const BasicTensor<T>& t, std::size_t b) {
  const Shape& s = t.shape();
  if (b >= s.n) throw ShapeError("batch index out of range");
  const std::size_t item = s.c * s.h * s.w;
  std::vector<T> vals(t.data() + b * item, t.data() + (b + 1) * item);
  return BasicTensor<T>(Shape{1, s.c, s.h, s.w}, std::move(vals));
}

template <typename T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>> items) {
  if (items.empty()) throw ShapeError("stack_batch: no items");
  Shape s = items.front().shape();
  std::size_t total = 0;
  std::vector<T> vals;
  for (const auto& it : items) {
    const Shape& o = it.shape();
    if (o.c != s.c || o.h != s.h || o.w != s.w) {
      throw ShapeError("stack_batch: shape mismatch " + o.str() + " vs " + s.str());
    }
    total += o.n;
    vals.insert(vals.end(), it.values().begin(), it.values().end());
  }
  s.n = total;
  return BasicTensor<T>(s, std::move(vals));
}

LabelMap label_item(const LabelMap& labels, std::size_t b) {
  if (b >= labels.n) throw ShapeError("label batch index out of range");
  LabelMap out(1, labels.h, labels.w);
  const std::size_t plane = labels.h * labels.w;
  std::copy_n(labels.labels.begin() + static_cast<std::ptrdiff_t>(b * plane), plane,
              out.labels.begin());
  return out;
}

LabelMap stack_labels(std::span<const LabelMap> items) {
  if (items.empty()) throw ShapeError("stack_labels: no items");
  LabelMap out;
  out.h = items.front().h;
  out.w = items.front().w;
  for (const auto& it : items) {
    if (it.h != out.h || it.w != out.w) throw ShapeError("stack_labels: size mismatch");
    out.n += it.n;
    out.labels.insert(out.labels.end(), it.labels.begin(), it.labels.end());
  }
  return out;
}

#define SEGREFINE_INSTANTIATE(T)                                          \
  template class BasicTensor<T>;                                          \
  template void require_finite<T>(const BasicTensor<T>&, const char*);    \
  template LabelMap argmax_labels<T>(const BasicTensor<T>&);              \
  template bool is_prob_map<T>(const BasicTensor<T>&, double);            \
  template BasicTensor<T> batch_item<T>(const BasicTensor<T>&, std::size_t); \
  template BasicTensor<T> stack_batch<T>(std::span<const BasicTensor<T>>);

SEGREFINE_INSTANTIATE(float)
SEGREFINE_INSTANTIATE(double)
#undef SEGREFINE_INSTANTIATE

}  // namespace segrefine
