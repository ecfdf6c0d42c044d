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

#include <fcntl.h>
#include <unistd.h>

#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "fib/error.h"
#include "fib/frame.h"

namespace fib {
namespace {

TEST(Frame, HeaderLayout) {
  const Frame f = Frame::text(FrameType::kError, "oops");
  const auto bytes = encode_frame(f);
  ASSERT_EQ(bytes.size(), 9u);
  EXPECT_EQ(bytes[0], 4);
  EXPECT_EQ(bytes[1], 0);
  EXPECT_EQ(bytes[4], 4);  // ERROR
  EXPECT_EQ(std::string(bytes.begin() + 5, bytes.end()), "oops");
}

TEST(Frame, DecodeRoundTripAndPartial) {
  const Frame f{FrameType::kResult, {1, 2, 3}};
  auto bytes = encode_frame(f);
  const auto tail = encode_frame(Frame{FrameType::kPing, {}});
  bytes.insert(bytes.end(), tail.begin(), tail.end());
  std::size_t used = 0;
  const auto got = decode_frame(bytes, &used);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->type, FrameType::kResult);
  EXPECT_EQ(got->payload, f.payload);
  EXPECT_EQ(used, 8u);
  for (std::size_t cut = 0; cut < 8; ++cut) {
    EXPECT_FALSE(decode_frame(std::span(bytes.data(), cut), nullptr)) << cut;
  }
}

TEST(Frame, RejectsUnknownTypeAndOversize) {
  std::vector<uint8_t> bad_type{0, 0, 0, 0, 9};
  EXPECT_THROW(decode_frame(bad_type, nullptr), Error);
  std::vector<uint8_t> zero_type{0, 0, 0, 0, 0};
  EXPECT_THROW(decode_frame(zero_type, nullptr), Error);
  std::vector<uint8_t> huge{0xff, 0xff, 0xff, 0xff, 3};
  try {
    decode_frame(huge, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kProtocol);
  }
}

TEST(Frame, RunPayloadRoundTrip) {
  RunRequest r;
  r.inputs.set("A", Tensor::from_floats(DType::kF16, {2, 2}, {1, 2, 3, 4}));
  r.inputs.set("n", Tensor::from_ints(DType::kI32, {1}, {7}));
  r.entry_point = "main.py::run";
  r.axes = {{"M", 2}, {"K", 2}};
  r.seed = 0xfeedfacecafebeefull;
  const RunRequest back = decode_run_payload(encode_run_payload(r));
  EXPECT_EQ(back.inputs, r.inputs);
  EXPECT_EQ(back.entry_point, r.entry_point);
  EXPECT_EQ(back.axes, r.axes);
  EXPECT_EQ(back.seed, r.seed);

  TensorMap out;
  out.set("C", Tensor::from_floats(DType::kF32, {1}, {3}));
  EXPECT_EQ(decode_result_payload(encode_result_payload(out)), out);
  auto trailing = encode_result_payload(out);
  trailing.push_back('x');
  EXPECT_THROW(decode_result_payload(trailing), Error);
}

// Mutated and random byte strings never crash the decoders: they either decode
// or raise fib::Error.
TEST(Frame, FuzzedInputsFailCleanly) {
  RunRequest r;
  r.inputs.set("x", Tensor::from_floats(DType::kF32, {3}, {1, 2, 3}));
  r.entry_point = "a::b";
  r.axes = {{"n", 3}};
  const auto payload = encode_run_payload(r);
  const auto frame = encode_frame(Frame{FrameType::kRun, payload});
  std::mt19937 gen(99);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int trial = 0; trial < 3000; ++trial) {
    auto f = frame;
    auto p = payload;
    const int flips = 1 + trial % 4;
    for (int i = 0; i < flips; ++i) {
      f[std::uniform_int_distribution<std::size_t>(0, f.size() - 1)(gen)] =
          static_cast<uint8_t>(byte(gen));
      p[std::uniform_int_distribution<std::size_t>(0, p.size() - 1)(gen)] =
          static_cast<uint8_t>(byte(gen));
    }
    if (trial % 5 == 0) p.resize(p.size() / 2);
    try {
      decode_frame(f, nullptr);
    } catch (const Error&) {
    }
    try {
      decode_run_payload(p);
    } catch (const Error&) {
    }
    try {
      decode_result_payload(p);
    } catch (const Error&) {
    }
  }
  SUCCEED();
}

class Pipe {
 public:
  Pipe() { EXPECT_EQ(::pipe2(fds_, O_CLOEXEC), 0); }
  ~Pipe() {
    close_write();
    ::close(fds_[0]);
  }
  int r() const { return fds_[0]; }
  int w() const { return fds_[1]; }
  void close_write() {
    if (fds_[1] >= 0) ::close(fds_[1]);
    fds_[1] = -1;
  }

 private:
  int fds_[2] = {-1, -1};
};

TEST(FrameIo, ReadWriteTimeoutEof) {
  Pipe p;
  write_frame(p.w(), Frame::text(FrameType::kHello, "{}"));
  Frame got;
  ASSERT_EQ(read_frame(p.r(), got, std::nullopt), ReadStatus::kOk);
  EXPECT_EQ(got.payload_text(), "{}");

  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(read_frame(p.r(), got,
                       std::chrono::steady_clock::now() + std::chrono::milliseconds(50)),
            ReadStatus::kTimeout);
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(50));

  const auto bytes = encode_frame(Frame::text(FrameType::kResult, "abcdef"));
  ASSERT_EQ(::write(p.w(), bytes.data(), 7), 7);
  p.close_write();
  EXPECT_THROW(read_frame(p.r(), got, std::nullopt), Error);
}

TEST(FrameIo, CleanEofAndSplitWrites) {
  Pipe p;
  const auto bytes = encode_frame(Frame::text(FrameType::kError, "split"));
  std::thread writer([&] {
    for (uint8_t b : bytes) {
      ASSERT_EQ(::write(p.w(), &b, 1), 1);
      std::this_thread::sleep_for(std::chrono::microseconds(200));
    }
    p.close_write();
  });
  Frame got;
  EXPECT_EQ(read_frame(p.r(), got, std::nullopt), ReadStatus::kOk);
  EXPECT_EQ(got.payload_text(), "split");
  writer.join();
  EXPECT_EQ(read_frame(p.r(), got, std::nullopt), ReadStatus::kEof);
}

}  // namespace
}  // namespace fib
