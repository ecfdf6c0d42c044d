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

#include "fib/dtype.h"

#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "fib/error.h"

namespace fib {

namespace {

struct FloatFormat {
  int mantissa_bits;
  int min_normal_exp;  // unbiased exponent of the smallest normal
  double max_finite;
};

FloatFormat format_of(DType dtype) {
  switch (dtype) {
    case DType::kF16: return {10, -14, 65504.0};
    case DType::kBF16: return {7, -126, 3.3895313892515355e38};
    case DType::kF8E4M3: return {3, -6, 448.0};
    default: return {23, -126, std::numeric_limits<float>::max()};
  }
}

// Exact in double for every format above: a float has 24 significant bits and
// scaling by a power of two never rounds.
double round_to_format(double value, const FloatFormat& fmt) {
  if (value == 0.0 || !std::isfinite(value)) return value;
  const double magnitude = std::fabs(value);
  int exp = 0;
  std::frexp(magnitude, &exp);
  exp -= 1;  // magnitude in [2^exp, 2^(exp+1))
  if (exp < fmt.min_normal_exp) exp = fmt.min_normal_exp;
  const double quantum = std::ldexp(1.0, exp - fmt.mantissa_bits);
  double rounded = std::nearbyint(magnitude / quantum) * quantum;
  if (rounded > fmt.max_finite) rounded = fmt.max_finite;
  return std::copysign(rounded, value);
}

}  // namespace

std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "float32";
    case DType::kF16: return "float16";
    case DType::kBF16: return "bfloat16";
    case DType::kF8E4M3: return "float8_e4m3fn";
    case DType::kI32: return "int32";
    case DType::kI64: return "int64";
  }
  return "?";
}

DType parse_dtype(std::string_view text) {
  if (text == "float32" || text == "f32") return DType::kF32;
  if (text == "float16" || text == "f16") return DType::kF16;
  if (text == "bfloat16" || text == "bf16") return DType::kBF16;
  if (text == "float8_e4m3fn" || text == "float8_e4m3" || text == "f8e4m3")
    return DType::kF8E4M3;
  if (text == "int32" || text == "i32") return DType::kI32;
  if (text == "int64" || text == "i64") return DType::kI64;
  throw Error(ErrorCode::kSchema, "unknown dtype '" + std::string(text) + "'");
}

std::string_view archive_dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "F32";
    case DType::kF16: return "F16";
    case DType::kBF16: return "BF16";
    case DType::kF8E4M3: return "F8_E4M3";
    case DType::kI32: return "I32";
    case DType::kI64: return "I64";
  }
  return "?";
}

DType parse_archive_dtype(std::string_view text) {
  if (text == "F32") return DType::kF32;
  if (text == "F16") return DType::kF16;
  if (text == "BF16") return DType::kBF16;
  if (text == "F8_E4M3") return DType::kF8E4M3;
  if (text == "I32") return DType::kI32;
  if (text == "I64") return DType::kI64;
  throw Error(ErrorCode::kCorruptHeader,
              "unsupported archive dtype '" + std::string(text) + "'");
}

std::size_t dtype_size(DType dtype) {
  switch (dtype) {
    case DType::kF32: return 4;
    case DType::kF16: return 2;
    case DType::kBF16: return 2;
    case DType::kF8E4M3: return 1;
    case DType::kI32: return 4;
    case DType::kI64: return 8;
  }
  return 0;
}

bool is_float(DType dtype) {
  return dtype == DType::kF32 || dtype == DType::kF16 ||
         dtype == DType::kBF16 || dtype == DType::kF8E4M3;
}

bool is_low_precision(DType dtype) {
  return dtype == DType::kF16 || dtype == DType::kBF16 ||
         dtype == DType::kF8E4M3;
}

double max_finite(DType dtype) { return format_of(dtype).max_finite; }

float round_to_dtype(float value, DType dtype) {
  if (!is_low_precision(dtype)) return value;
  // E4M3 has no infinity encoding.
  if (dtype == DType::kF8E4M3 && std::isinf(value)) {
    return std::copysign(448.0f, value);
  }
  return static_cast<float>(round_to_format(value, format_of(dtype)));
}

uint16_t float_to_half_bits(float value) {
  const uint32_t sign = std::signbit(value) ? 0x8000u : 0u;
  if (std::isnan(value)) return static_cast<uint16_t>(sign | 0x7e00u);
  if (std::isinf(value)) return static_cast<uint16_t>(sign | 0x7c00u);
  const double q = std::fabs(round_to_format(value, format_of(DType::kF16)));
  if (q == 0.0) return static_cast<uint16_t>(sign);
  int exp = 0;
  std::frexp(q, &exp);
  exp -= 1;
  if (exp < -14) {
    const auto mant = static_cast<uint32_t>(std::ldexp(q, 24));
    return static_cast<uint16_t>(sign | mant);
  }
  const auto mant =
      static_cast<uint32_t>(std::ldexp(q, 10 - exp)) & 0x3ffu;
  return static_cast<uint16_t>(sign | (static_cast<uint32_t>(exp + 15) << 10) |
                               mant);
}

float half_bits_to_float(uint16_t bits) {
  const bool negative = (bits & 0x8000u) != 0;
  const int exp = (bits >> 10) & 0x1f;
  const int mant = bits & 0x3ff;
  double value;
  if (exp == 0) {
    value = std::ldexp(static_cast<double>(mant), -24);
  } else if (exp == 31) {
    value = mant == 0 ? std::numeric_limits<double>::infinity()
                      : std::numeric_limits<double>::quiet_NaN();
  } else {
    value = std::ldexp(static_cast<double>(mant | 0x400), exp - 25);
  }
  return static_cast<float>(negative ? -value : value);
}

uint16_t float_to_bf16_bits(float value) {
  if (std::isnan(value)) {
    return static_cast<uint16_t>((std::bit_cast<uint32_t>(value) >> 16) |
                                 0x0040u);
  }
  const float q = round_to_dtype(value, DType::kBF16);
  return static_cast<uint16_t>(std::bit_cast<uint32_t>(q) >> 16);
}

float bf16_bits_to_float(uint16_t bits) {
  return std::bit_cast<float>(static_cast<uint32_t>(bits) << 16);
}

// E4M3 "fn" layout: bias 7, no infinities, S.1111.111 is NaN.
uint8_t float_to_f8e4m3_bits(float value) {
  const uint32_t sign = std::signbit(value) ? 0x80u : 0u;
  if (std::isnan(value)) return static_cast<uint8_t>(sign | 0x7fu);
  const double q = std::fabs(round_to_format(
      std::isinf(value) ? std::copysign(448.0f, value) : value,
      format_of(DType::kF8E4M3)));
  if (q == 0.0) return static_cast<uint8_t>(sign);
  int exp = 0;
  std::frexp(q, &exp);
  exp -= 1;
  if (exp < -6) {
    const auto mant = static_cast<uint32_t>(std::ldexp(q, 9));
    return static_cast<uint8_t>(sign | mant);
  }
  const auto mant = static_cast<uint32_t>(std::ldexp(q, 3 - exp)) & 0x7u;
  return static_cast<uint8_t>(sign | (static_cast<uint32_t>(exp + 7) << 3) |
                              mant);
}

float f8e4m3_bits_to_float(uint8_t bits) {
  const bool negative = (bits & 0x80u) != 0;
  const int exp = (bits >> 3) & 0xf;
  const int mant = bits & 0x7;
  double value;
  if (exp == 0xf && mant == 0x7) {
    value = std::numeric_limits<double>::quiet_NaN();
  } else if (exp == 0) {
    value = std::ldexp(static_cast<double>(mant), -9);
  } else {
    value = std::ldexp(static_cast<double>(mant | 0x8), exp - 10);
  }
  return static_cast<float>(negative ? -value : value);
}

}  // namespace fib
