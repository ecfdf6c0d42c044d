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

#ifndef FIB_DTYPE_H_
#define FIB_DTYPE_H_

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace fib {

enum class DType { kF32, kF16, kBF16, kF8E4M3, kI32, kI64 };

// Trace-document spelling ("float16", "bfloat16", ...).
std::string_view dtype_name(DType dtype);
// Accepts the trace spelling plus the short forms f32/f16/bf16/f8e4m3/i32/i64.
// Throws Error(kSchema) for anything else.
DType parse_dtype(std::string_view text);

// Archive header spelling ("F16", "BF16", "F8_E4M3", ...).
std::string_view archive_dtype_name(DType dtype);
DType parse_archive_dtype(std::string_view text);

std::size_t dtype_size(DType dtype);
bool is_float(DType dtype);
inline bool is_integer(DType dtype) { return !is_float(dtype); }
bool is_low_precision(DType dtype);

// Largest finite value of a float dtype.
double max_finite(DType dtype);

// Rounds to the nearest value representable in `dtype` (ties to even). Finite
// values beyond the range saturate to +-max_finite; NaN passes through, and so
// do infinities except in f8e4m3, which has none and saturates them too.
// Identity for kF32.
float round_to_dtype(float value, DType dtype);

uint16_t float_to_half_bits(float value);
float half_bits_to_float(uint16_t bits);
uint16_t float_to_bf16_bits(float value);
float bf16_bits_to_float(uint16_t bits);
uint8_t float_to_f8e4m3_bits(float value);
float f8e4m3_bits_to_float(uint8_t bits);

}  // namespace fib

#endif  // FIB_DTYPE_H_
