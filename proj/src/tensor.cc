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

#include "fib/tensor.h"

#include <bit>
#include <cstring>

#include "fib/error.h"

namespace fib {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

namespace {

void check_shape(const Shape& shape, std::size_t count) {
  for (int64_t d : shape) {
    if (d < 0) {
      throw Error(ErrorCode::kShapeMismatch,
                  "negative dimension in " + shape_to_string(shape));
    }
  }
  if (static_cast<std::size_t>(shape_numel(shape)) != count) {
    throw Error(ErrorCode::kShapeMismatch,
                "buffer of " + std::to_string(count) +
                    " elements does not match shape " + shape_to_string(shape));
  }
}

int64_t wrap_integer(int64_t v, DType dtype) {
  if (dtype == DType::kI32) {
    return static_cast<int32_t>(static_cast<uint32_t>(v));
  }
  return v;
}

}  // namespace

Tensor Tensor::zeros(DType dtype, Shape shape) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  if (is_float(dtype)) return from_floats(dtype, std::move(shape), std::vector<float>(n));
  return from_ints(dtype, std::move(shape), std::vector<int64_t>(n));
}

Tensor Tensor::from_floats(DType dtype, Shape shape, std::vector<float> values) {
  if (!is_float(dtype)) {
    throw Error(ErrorCode::kDTypeMismatch,
                "float values for " + std::string(dtype_name(dtype)));
  }
  check_shape(shape, values.size());
  Tensor t;
  t.dtype_ = dtype;
  t.shape_ = std::move(shape);
  if (is_low_precision(dtype)) {
    for (float& v : values) v = round_to_dtype(v, dtype);
  }
  t.floats_ = std::move(values);
  return t;
}

Tensor Tensor::from_ints(DType dtype, Shape shape, std::vector<int64_t> values) {
  if (!is_integer(dtype)) {
    throw Error(ErrorCode::kDTypeMismatch,
                "integer values for " + std::string(dtype_name(dtype)));
  }
  check_shape(shape, values.size());
  Tensor t;
  t.dtype_ = dtype;
  t.shape_ = std::move(shape);
  for (int64_t& v : values) v = wrap_integer(v, dtype);
  t.ints_ = std::move(values);
  return t;
}

Tensor Tensor::scalar(DType dtype, double value) {
  if (is_float(dtype)) {
    return from_floats(dtype, {}, {static_cast<float>(value)});
  }
  return from_ints(dtype, {}, {static_cast<int64_t>(value)});
}

double Tensor::value(int64_t flat_index) const {
  const auto i = static_cast<std::size_t>(flat_index);
  return is_float(dtype_) ? static_cast<double>(floats_.at(i))
                          : static_cast<double>(ints_.at(i));
}

std::vector<uint8_t> Tensor::to_bytes() const {
  const std::size_t n = static_cast<std::size_t>(numel());
  const std::size_t width = dtype_size(dtype_);
  std::vector<uint8_t> out(n * width);
  auto put = [&](std::size_t i, uint64_t bits) {
    for (std::size_t b = 0; b < width; ++b) {
      out[i * width + b] = static_cast<uint8_t>(bits >> (8 * b));
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    switch (dtype_) {
      case DType::kF32: put(i, std::bit_cast<uint32_t>(floats_[i])); break;
      case DType::kF16: put(i, float_to_half_bits(floats_[i])); break;
      case DType::kBF16: put(i, float_to_bf16_bits(floats_[i])); break;
      case DType::kF8E4M3: put(i, float_to_f8e4m3_bits(floats_[i])); break;
      case DType::kI32:
        put(i, static_cast<uint32_t>(static_cast<int32_t>(ints_[i])));
        break;
      case DType::kI64: put(i, static_cast<uint64_t>(ints_[i])); break;
    }
  }
  return out;
}

Tensor Tensor::from_bytes(DType dtype, Shape shape,
                          std::span<const uint8_t> bytes) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  const std::size_t width = dtype_size(dtype);
  if (bytes.size() != n * width) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(bytes.size()) + " bytes for " +
                    std::to_string(n) + " elements of " +
                    std::string(dtype_name(dtype)));
  }
  auto get = [&](std::size_t i) {
    uint64_t bits = 0;
    for (std::size_t b = 0; b < width; ++b) {
      bits |= static_cast<uint64_t>(bytes[i * width + b]) << (8 * b);
    }
    return bits;
  };
  Tensor t;
  t.dtype_ = dtype;
  t.shape_ = std::move(shape);
  if (is_float(dtype)) {
    t.floats_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const uint64_t bits = get(i);
      switch (dtype) {
        case DType::kF32:
          t.floats_[i] = std::bit_cast<float>(static_cast<uint32_t>(bits));
          break;
        case DType::kF16:
          t.floats_[i] = half_bits_to_float(static_cast<uint16_t>(bits));
          break;
        case DType::kBF16:
          t.floats_[i] = bf16_bits_to_float(static_cast<uint16_t>(bits));
          break;
        default:
          t.floats_[i] = f8e4m3_bits_to_float(static_cast<uint8_t>(bits));
          break;
      }
    }
  } else {
    t.ints_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const uint64_t bits = get(i);
      t.ints_[i] = dtype == DType::kI32
                       ? static_cast<int32_t>(static_cast<uint32_t>(bits))
                       : static_cast<int64_t>(bits);
    }
  }
  return t;
}

bool Tensor::operator==(const Tensor& other) const {
  return dtype_ == other.dtype_ && shape_ == other.shape_ &&
         to_bytes() == other.to_bytes();
}

Tensor quantize(const Tensor& tensor, DType target) {
  if (!is_float(tensor.dtype()) || !is_float(target)) {
    throw Error(ErrorCode::kDTypeMismatch, "quantize requires float dtypes");
  }
  const auto src = tensor.floats();
  return Tensor::from_floats(target, tensor.shape(),
                             std::vector<float>(src.begin(), src.end()));
}

TensorMap::TensorMap(
    std::initializer_list<std::pair<std::string, Tensor>> items) {
  for (const auto& [name, tensor] : items) set(name, tensor);
}

void TensorMap::set(std::string name, Tensor tensor) {
  for (auto& item : items_) {
    if (item.first == name) {
      item.second = std::move(tensor);
      return;
    }
  }
  items_.emplace_back(std::move(name), std::move(tensor));
}

bool TensorMap::contains(std::string_view name) const {
  return find(name) != nullptr;
}

const Tensor* TensorMap::find(std::string_view name) const {
  for (const auto& item : items_) {
    if (item.first == name) return &item.second;
  }
  return nullptr;
}

const Tensor& TensorMap::at(std::string_view name) const {
  const Tensor* t = find(name);
  if (t == nullptr) {
    throw Error(ErrorCode::kArchiveMissingKey,
                "no tensor named '" + std::string(name) + "'");
  }
  return *t;
}

Tensor& TensorMap::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

}  // namespace fib
