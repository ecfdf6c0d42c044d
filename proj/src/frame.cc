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

#include "fib/frame.h"

#include <errno.h>
#include <poll.h>
#include <unistd.h>

#include <cstring>

#include "fib/archive.h"
#include "fib/error.h"
#include "json.hpp"

namespace fib {

std::string_view frame_type_name(FrameType type) {
  switch (type) {
    case FrameType::kHello: return "HELLO";
    case FrameType::kRun: return "RUN";
    case FrameType::kResult: return "RESULT";
    case FrameType::kError: return "ERROR";
    case FrameType::kPing: return "PING";
    case FrameType::kBye: return "BYE";
  }
  return "?";
}

Frame Frame::text(FrameType type, std::string_view body) {
  return {type, std::vector<uint8_t>(body.begin(), body.end())};
}

std::vector<uint8_t> encode_frame(const Frame& frame) {
  const auto n = static_cast<uint32_t>(frame.payload.size());
  std::vector<uint8_t> out(kFrameHeaderSize + frame.payload.size());
  for (int b = 0; b < 4; ++b) out[b] = static_cast<uint8_t>(n >> (8 * b));
  out[4] = static_cast<uint8_t>(frame.type);
  std::memcpy(out.data() + kFrameHeaderSize, frame.payload.data(), frame.payload.size());
  return out;
}

namespace {

uint32_t header_length(const uint8_t* h) {
  return static_cast<uint32_t>(h[0]) | (static_cast<uint32_t>(h[1]) << 8) |
         (static_cast<uint32_t>(h[2]) << 16) | (static_cast<uint32_t>(h[3]) << 24);
}

FrameType checked_type(uint8_t raw, uint32_t length) {
  if (raw < 1 || raw > 6) {
    throw Error(ErrorCode::kProtocol, "unknown frame type " + std::to_string(raw));
  }
  if (length > kMaxFramePayload) {
    throw Error(ErrorCode::kProtocol, "frame length " + std::to_string(length) +
                                          " exceeds limit");
  }
  return static_cast<FrameType>(raw);
}

// Returns false on EOF before `n` bytes, true once all bytes arrived.
// Sets `timed_out` if the deadline passed first.
bool read_exact(int fd, uint8_t* dst, std::size_t n,
                const std::optional<std::chrono::steady_clock::time_point>& deadline,
                bool& timed_out) {
  std::size_t got = 0;
  while (got < n) {
    int wait_ms = -1;
    if (deadline) {
      const auto left = std::chrono::ceil<std::chrono::milliseconds>(
          *deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) {
        timed_out = true;
        return false;
      }
      wait_ms = static_cast<int>(std::min<long long>(left.count(), 1 << 30));
    }
    pollfd pfd{fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, wait_ms);
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, std::string("poll: ") + std::strerror(errno));
    }
    if (ready == 0) continue;  // deadline re-checked above
    const ssize_t r = ::read(fd, dst + got, n - got);
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(ErrorCode::kIo, std::string("read: ") + std::strerror(errno));
    }
    if (r == 0) return false;
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

std::optional<Frame> decode_frame(std::span<const uint8_t> bytes, std::size_t* consumed) {
  if (bytes.size() < kFrameHeaderSize) return std::nullopt;
  const uint32_t n = header_length(bytes.data());
  const FrameType type = checked_type(bytes[4], n);
  if (bytes.size() - kFrameHeaderSize < n) return std::nullopt;
  Frame f{type, std::vector<uint8_t>(bytes.begin() + kFrameHeaderSize,
                                     bytes.begin() + kFrameHeaderSize + n)};
  if (consumed != nullptr) *consumed = kFrameHeaderSize + n;
  return f;
}

void write_frame(int fd, const Frame& frame) {
  const std::vector<uint8_t> bytes = encode_frame(frame);
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t w = ::write(fd, bytes.data() + sent, bytes.size() - sent);
    if (w < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw Error(ErrorCode::kIo, std::string("write: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(w);
  }
}

ReadStatus read_frame(int fd, Frame& out,
                      std::optional<std::chrono::steady_clock::time_point> deadline) {
  uint8_t header[kFrameHeaderSize];
  bool timed_out = false;
  if (!read_exact(fd, header, kFrameHeaderSize, deadline, timed_out)) {
    return timed_out ? ReadStatus::kTimeout : ReadStatus::kEof;
  }
  const uint32_t n = header_length(header);
  out.type = checked_type(header[4], n);
  out.payload.resize(n);
  if (!read_exact(fd, out.payload.data(), n, deadline, timed_out)) {
    if (timed_out) return ReadStatus::kTimeout;
    throw Error(ErrorCode::kProtocol, "stream ended inside a " +
                                          std::string(frame_type_name(out.type)) +
                                          " frame");
  }
  return ReadStatus::kOk;
}

std::vector<uint8_t> encode_run_payload(const RunRequest& request) {
  std::vector<uint8_t> out = write_archive(request.inputs);
  nlohmann::ordered_json trailer = nlohmann::ordered_json::object();
  nlohmann::ordered_json axes = nlohmann::ordered_json::object();
  for (const auto& [k, v] : request.axes) axes[k] = v;
  trailer["axes"] = std::move(axes);
  trailer["entry_point"] = request.entry_point;
  trailer["seed"] = request.seed;
  const std::string text = trailer.dump();
  out.insert(out.end(), text.begin(), text.end());
  return out;
}

RunRequest decode_run_payload(std::span<const uint8_t> payload) {
  RunRequest request;
  std::size_t used = 0;
  try {
    request.inputs = read_archive(payload, &used).tensors;
  } catch (const Error& e) {
    throw Error(ErrorCode::kProtocol, std::string("RUN archive: ") + e.what());
  }
  const auto* begin = reinterpret_cast<const char*>(payload.data() + used);
  const auto* end = reinterpret_cast<const char*>(payload.data() + payload.size());
  if (begin == end) return request;
  try {
    const auto trailer = nlohmann::json::parse(begin, end);
    if (trailer.contains("entry_point")) {
      request.entry_point = trailer.at("entry_point").get<std::string>();
    }
    if (trailer.contains("axes")) {
      for (const auto& [k, v] : trailer.at("axes").items()) request.axes[k] = v.get<int64_t>();
    }
    if (trailer.contains("seed")) request.seed = trailer.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("RUN trailer: ") + e.what());
  }
  return request;
}

std::vector<uint8_t> encode_result_payload(const TensorMap& outputs) {
  return write_archive(outputs);
}

TensorMap decode_result_payload(std::span<const uint8_t> payload) {
  try {
    std::size_t used = 0;
    TensorMap out = read_archive(payload, &used).tensors;
    if (used != payload.size()) {
      throw Error(ErrorCode::kProtocol, "trailing bytes after RESULT archive");
    }
    return out;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kProtocol) throw;
    throw Error(ErrorCode::kProtocol, std::string("RESULT archive: ") + e.what());
  }
}

}  // namespace fib
