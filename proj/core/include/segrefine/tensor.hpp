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

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace segrefine {

/// Allocator with 64-byte alignment. Vectorized kernels choose their
/// peeling from the buffer address, so a fixed alignment keeps results
/// bit-reproducible from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dimensions of a rank-4 tensor laid out as (batch, channels, height, width).
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t count() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

/// Dense row-major tensor, batch outermost. `T` is float for storage and
/// double for gradient checking.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0})
      : shape_(shape), data_(shape.count(), fill) {}
  BasicTensor(Shape shape, std::vector<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() & { return data_; }
  std::span<const T> values() const& { return data_; }
  std::span<const T> values() && = delete;

  std::size_t index(std::size_t b, std::size_t ch, std::size_t y,
                    std::size_t x) const {
    return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  T& at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) {
    return data_[index(b, ch, y, x)];
  }
  T at(std::size_t b, std::size_t ch, std::size_t y, std::size_t x) const {
    return data_[index(b, ch, y, x)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  /// Pointer to the (b, ch) plane.
  T* plane(std::size_t b, std::size_t ch) { return data_.data() + index(b, ch, 0, 0); }
  const T* plane(std::size_t b, std::size_t ch) const {
    return data_.data() + index(b, ch, 0, 0);
  }

  void fill(T v);
  bool all_finite() const;
  BasicTensor& operator+=(const BasicTensor& other);
  BasicTensor& operator*=(T s);

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
  std::vector<To> out(t.values().begin(), t.values().end());
  return BasicTensor<To>(t.shape(), std::move(out));
}

/// Throws NumericError naming `what` if any value is NaN/Inf.
template <typename T>
void require_finite(const BasicTensor<T>& t, const char* what);

/// Throws ShapeError unless a and b have identical shapes.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Per-pixel integer class ids, (n, h, w). Id 255 marks ignored pixels.
struct LabelMap {
  static constexpr std::uint8_t kIgnore = 255;

  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t n_, std::size_t h_, std::size_t w_, std::uint8_t fill = 0)
      : n(n_), h(h_), w(w_), labels(n_ * h_ * w_, fill) {}

  std::size_t size() const { return labels.size(); }
  std::uint8_t& at(std::size_t b, std::size_t y, std::size_t x) {
    return labels[(b * h + y) * w + x];
  }
  std::uint8_t at(std::size_t b, std::size_t y, std::size_t x) const {
    return labels[(b * h + y) * w + x];
  }
  bool operator==(const LabelMap&) const = default;
};

/// Per-pixel argmax over channels; ties resolve to the lowest class id.
template <typename T>
LabelMap argmax_labels(const BasicTensor<T>& probs);

/// One-hot encoding of `labels` with `num_classes` channels. Ignored pixels
/// become uniform distributions.
Tensor one_hot(const LabelMap& labels, std::size_t num_classes);

/// True if every pixel is a categorical distribution: values in [0, 1] and
/// channel sums within `tol` of 1.
template <typename T>
bool is_prob_map(const BasicTensor<T>& t, double tol = 1e-5);

/// Copies batch item `b` into a (1, c, h, w) tensor.
template <typename T>
BasicTensor<T> batch_item(const BasicTensor<T>& t, std::size_t b);

/// Stacks equally-shaped tensors along the batch axis.
template <typename T>
BasicTensor<T> stack_batch(std::span<const BasicTensor<T>> items);

LabelMap label_item(const LabelMap& labels, std::size_t b);
LabelMap stack_labels(std::span<const LabelMap> items);

}  // namespace segrefine
