// Copyright 2026 The sfadapt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sfadapt/errors.hpp"

namespace sfadapt {

struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense N x C x H x W array, row-major with W fastest. Used for image
// batches, per-pixel network outputs and masks alike.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape4 shape, T fill = T(0))
      : shape_(shape), data_(shape.size(), fill) {}
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : Tensor(Shape4{n, c, h, w}, fill) {}

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  std::size_t index(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) *
               shape_.w +
           x;
  }
  T& operator()(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const {
    return data_[index(n, c, y, x)];
  }

  // Contiguous H x W plane of item n, channel c.
  T* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(static_cast<double>(v)); });
  }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && data_ == o.data_;
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

template <class To, class From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape());
  std::transform(t.values().begin(), t.values().end(), out.values().begin(),
                 [](From v) { return static_cast<To>(v); });
  return out;
}

// Items [first, first + count) of a batch.
template <class T>
Tensor<T> slice_items(const Tensor<T>& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.n()) {
    throw ShapeError("slice_items: range out of bounds for " + t.shape().str());
  }
  Tensor<T> out(count, t.c(), t.h(), t.w());
  const std::size_t item = static_cast<std::size_t>(t.c()) * t.shape().plane();
  std::copy_n(t.data() + first * item, count * item, out.data());
  return out;
}

// Channels [first, first + count) of every item.
template <class T>
Tensor<T> slice_channels(const Tensor<T>& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.c()) {
    throw ShapeError("slice_channels: range out of bounds for " +
                     t.shape().str());
  }
  Tensor<T> out(t.n(), count, t.h(), t.w());
  const std::size_t plane = t.shape().plane();
  for (int n = 0; n < t.n(); ++n) {
    std::copy_n(t.plane(n, first), count * plane, out.plane(n, 0));
  }
  return out;
}

// Concatenates batches along the item axis.
template <class T>
Tensor<T> concat_items(std::span<const Tensor<T>> parts) {
  if (parts.empty()) return {};
  Shape4 s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.c() != s.c || p.h() != s.h || p.w() != s.w) {
      throw ShapeError("concat_items: mismatched shapes " + s.str() + " vs " +
                       p.shape().str());
    }
    total += p.n();
  }
  s.n = total;
  Tensor<T> out(s);
  T* dst = out.data();
  for (const auto& p : parts) dst = std::copy(p.values().begin(), p.values().end(), dst);
  return out;
}

}  // namespace sfadapt
