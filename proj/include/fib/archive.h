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

#ifndef FIB_ARCHIVE_H_
#define FIB_ARCHIVE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fib/tensor.h"

namespace fib {

struct ByteRange {
  uint64_t begin = 0;
  uint64_t end = 0;
  bool operator==(const ByteRange&) const = default;
};

// Container layout (safetensors-compatible):
//   u64 little-endian header length N
//   N bytes of JSON: name -> {"dtype", "shape", "data_offsets": [begin, end)}
//   concatenated little-endian tensor buffers
struct TensorArchive {
  TensorMap tensors;
  std::vector<ByteRange> ranges;  // parallel to `tensors`, filled by readers

  bool operator==(const TensorArchive& other) const {
    return tensors == other.tensors;
  }
};

std::vector<uint8_t> write_archive(const TensorMap& tensors);

// Parses an archive from the front of `bytes`. When `consumed` is non-null it
// receives the archive's total size, so callers can read trailing data.
TensorArchive read_archive(std::span<const uint8_t> bytes,
                           std::size_t* consumed = nullptr);

TensorArchive load_archive_file(const std::filesystem::path& path);
void save_archive_file(const std::filesystem::path& path,
                       const TensorMap& tensors);

}  // namespace fib

#endif  // FIB_ARCHIVE_H_
