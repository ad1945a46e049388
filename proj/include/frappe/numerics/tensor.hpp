// Copyright 2026 The FRAPPE Authors. All Rights Reserved.
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

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "frappe/error.hpp"

namespace frappe {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(std::span<const std::size_t> extents) {
  return std::accumulate(extents.begin(), extents.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(std::span<const std::size_t> extents) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < extents.size(); ++i) os << (i ? "," : "") << extents[i];
  os << ')';
  return os.str();
}

// Dense row-major array, channels first then the spatial extents.
//
// Every extent is at least one; a scalar is shape {1}.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_shape();
    data_.assign(shape_product(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (shape_product(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t channels() const { return shape_.at(0); }
  // Number of positions per channel (product of the non-channel extents).
  std::size_t sites() const { return shape_.empty() ? 0 : data_.size() / shape_[0]; }
  Shape spatial() const { return shape_.empty() ? Shape{} : Shape(shape_.begin() + 1, shape_.end()); }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }

  std::span<T> channel(std::size_t c) { return {data_.data() + c * sites(), sites()}; }
  std::span<const T> channel(std::size_t c) const { return {data_.data() + c * sites(), sites()}; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T item() const {
    if (data_.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(shape_));
    return data_[0];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  void check_shape() const {
    if (shape_.empty()) throw DimensionError("tensor needs at least one extent");
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (shape_[i] == 0) throw DimensionError("zero extent on axis " + std::to_string(i));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace frappe
