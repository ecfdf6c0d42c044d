// Copyright 2026 The fib Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FIB_TENSOR_H_
#define FIB_TENSOR_H_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fib/dtype.h"

namespace fib {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major tensor. Float dtypes keep their values widened to f32 (and
// always on the dtype's grid); integer dtypes keep int64 values.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(DType dtype, Shape shape);
  // Values are rounded onto the dtype grid.
  static Tensor from_floats(DType dtype, Shape shape, std::vector<float> values);
  static Tensor from_ints(DType dtype, Shape shape, std::vector<int64_t> values);
  static Tensor scalar(DType dtype, double value);

  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  int64_t numel() const { return shape_numel(shape_); }
  bool is_scalar() const { return shape_.empty(); }

  std::span<const float> floats() const { return floats_; }
  std::span<float> mutable_floats() { return floats_; }
  std::span<const int64_t> ints() const { return ints_; }
  std::span<int64_t> mutable_ints() { return ints_; }

  // Element as double regardless of storage.
  double value(int64_t flat_index) const;
  double item() const { return value(0); }

  // Little-endian encoding in the tensor's own dtype, and its inverse.
  std::vector<uint8_t> to_bytes() const;
  static Tensor from_bytes(DType dtype, Shape shape,
                           std::span<const uint8_t> bytes);

  // Bitwise equality of dtype, shape and encoded data.
  bool operator==(const Tensor& other) const;

 private:
  DType dtype_ = DType::kF32;
  Shape shape_;
  std::vector<float> floats_;
  std::vector<int64_t> ints_;
};

Tensor quantize(const Tensor& tensor, DType target);

// Insertion-ordered name -> Tensor map. Order is the kernel argument order.
class TensorMap {
 public:
  TensorMap() = default;
  TensorMap(std::initializer_list<std::pair<std::string, Tensor>> items);

  void set(std::string name, Tensor tensor);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor* find(std::string_view name) const;

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const std::pair<std::string, Tensor>& operator[](std::size_t i) const {
    return items_[i];
  }

  bool operator==(const TensorMap& other) const = default;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace fib

#endif  // FIB_TENSOR_H_
