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

#ifndef FIB_FRAME_H_
#define FIB_FRAME_H_

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fib/tensor.h"

namespace fib {

// Host <-> plugin frames over the plugin's stdin/stdout:
//   u32 little-endian payload length | u8 frame type | payload
enum class FrameType : uint8_t {
  kHello = 1,   // host: harness info; plugin reply: runtime versions (JSON)
  kRun = 2,     // archive of inputs + JSON trailer {axes, entry_point, seed}
  kResult = 3,  // archive of outputs
  kError = 4,   // UTF-8 diagnostic
  kPing = 5,
  kBye = 6,
};

std::string_view frame_type_name(FrameType type);

inline constexpr uint32_t kMaxFramePayload = 1u << 30;
inline constexpr std::size_t kFrameHeaderSize = 5;

struct Frame {
  FrameType type = FrameType::kPing;
  std::vector<uint8_t> payload;

  static Frame text(FrameType type, std::string_view body);
  std::string payload_text() const { return {payload.begin(), payload.end()}; }
};

std::vector<uint8_t> encode_frame(const Frame& frame);

// Decodes one frame from the front of `bytes`. Returns nullopt when more bytes
// are needed. Throws Error(kProtocol) on an unknown type or oversized length.
std::optional<Frame> decode_frame(std::span<const uint8_t> bytes, std::size_t* consumed);

// Blocking write of a whole frame. Throws Error(kIo) when the peer is gone.
void write_frame(int fd, const Frame& frame);

enum class ReadStatus { kOk, kEof, kTimeout };

// Reads exactly one frame, waiting until `deadline` at most.
// Throws Error(kProtocol) for malformed frames.
ReadStatus read_frame(int fd, Frame& out,
                      std::optional<std::chrono::steady_clock::time_point> deadline);

struct RunRequest {
  TensorMap inputs;
  std::string entry_point;
  std::map<std::string, int64_t> axes;
  uint64_t seed = 0;
};

std::vector<uint8_t> encode_run_payload(const RunRequest& request);
RunRequest decode_run_payload(std::span<const uint8_t> payload);

std::vector<uint8_t> encode_result_payload(const TensorMap& outputs);
TensorMap decode_result_payload(std::span<const uint8_t> payload);

}  // namespace fib

#endif  // FIB_FRAME_H_
