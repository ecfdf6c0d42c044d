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

#include "fib/archive.h"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

#include "fib/error.h"
#include "json.hpp"

namespace fib {

using ordered_json = nlohmann::ordered_json;

std::vector<uint8_t> write_archive(const TensorMap& tensors) {
  ordered_json header = ordered_json::object();
  std::vector<uint8_t> payload;
  for (const auto& [name, tensor] : tensors) {
    std::vector<uint8_t> bytes = tensor.to_bytes();
    const uint64_t begin = payload.size();
    payload.insert(payload.end(), bytes.begin(), bytes.end());
    header[name] = {
        {"dtype", archive_dtype_name(tensor.dtype())},
        {"shape", tensor.shape()},
        {"data_offsets", {begin, static_cast<uint64_t>(payload.size())}}};
  }
  std::string text = header.dump();
  // Pad with spaces to an 8-byte boundary so the payload stays aligned.
  while ((8 + text.size()) % 8 != 0) text.push_back(' ');

  std::vector<uint8_t> out;
  out.reserve(8 + text.size() + payload.size());
  const uint64_t n = text.size();
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<uint8_t>(n >> (8 * b)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

TensorArchive read_archive(std::span<const uint8_t> bytes,
                           std::size_t* consumed) {
  if (bytes.size() < 8) {
    throw Error(ErrorCode::kCorruptHeader, "archive shorter than 8 bytes");
  }
  uint64_t header_len = 0;
  for (int b = 0; b < 8; ++b) {
    header_len |= static_cast<uint64_t>(bytes[b]) << (8 * b);
  }
  if (header_len > bytes.size() - 8) {
    throw Error(ErrorCode::kCorruptHeader,
                "header length " + std::to_string(header_len) +
                    " exceeds archive size");
  }
  const auto* header_begin = reinterpret_cast<const char*>(bytes.data() + 8);
  ordered_json header;
  try {
    header = ordered_json::parse(header_begin, header_begin + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptHeader, e.what());
  }
  if (!header.is_object()) {
    throw Error(ErrorCode::kCorruptHeader, "header is not an object");
  }

  struct Entry {
    std::string name;
    DType dtype;
    Shape shape;
    ByteRange range;
  };
  std::vector<Entry> entries;
  for (const auto& [name, meta] : header.items()) {
    if (name == "__metadata__") continue;
    try {
      Entry e{name, parse_archive_dtype(meta.at("dtype").get<std::string>()),
              meta.at("shape").get<Shape>(), {}};
      const auto& offsets = meta.at("data_offsets");
      if (!offsets.is_array() || offsets.size() != 2) {
        throw Error(ErrorCode::kCorruptHeader, "bad data_offsets for " + name);
      }
      e.range = {offsets[0].get<uint64_t>(), offsets[1].get<uint64_t>()};
      if (e.range.end < e.range.begin ||
          e.range.end - e.range.begin !=
              static_cast<uint64_t>(shape_numel(e.shape)) * dtype_size(e.dtype)) {
        throw Error(ErrorCode::kCorruptHeader,
                    "data_offsets inconsistent with shape for " + name);
      }
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::kCorruptHeader, name + ": " + ex.what());
    }
  }

  // Ranges must tile [0, payload_len) without gaps or overlap.
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entries[a].range.begin < entries[b].range.begin;
  });
  uint64_t cursor = 0;
  for (std::size_t i : order) {
    if (entries[i].range.begin != cursor) {
      throw Error(ErrorCode::kCorruptHeader,
                  "byte ranges are not contiguous at " + entries[i].name);
    }
    cursor = entries[i].range.end;
  }
  const uint64_t payload_len = cursor;
  const uint64_t data_start = 8 + header_len;
  if (bytes.size() - data_start < payload_len) {
    throw Error(ErrorCode::kTruncatedPayload,
                "payload needs " + std::to_string(payload_len) + " bytes, have " +
                    std::to_string(bytes.size() - data_start));
  }

  TensorArchive archive;
  for (const Entry& e : entries) {
    auto data = bytes.subspan(data_start + e.range.begin,
                              e.range.end - e.range.begin);
    archive.tensors.set(e.name, Tensor::from_bytes(e.dtype, e.shape, data));
    archive.ranges.push_back(e.range);
  }
  if (consumed != nullptr) *consumed = data_start + payload_len;
  return archive;
}

TensorArchive load_archive_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return read_archive(bytes);
}

void save_archive_file(const std::filesystem::path& path,
                       const TensorMap& tensors) {
  const std::vector<uint8_t> bytes = write_archive(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace fib
