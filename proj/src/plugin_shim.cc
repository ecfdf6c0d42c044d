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

#include <unistd.h>

#include <iostream>

#include "fib/error.h"
#include "fib/plugin.h"
#include "json.hpp"

namespace fib {

namespace {

std::string symbol_of(const std::string& entry_point) {
  const auto sep = entry_point.rfind("::");
  return sep == std::string::npos ? entry_point : entry_point.substr(sep + 2);
}

const KernelFn* pick(const KernelRegistry& kernels, const RunRequest& req,
                     const std::string& fallback) {
  if (auto it = kernels.find(symbol_of(req.entry_point)); it != kernels.end()) {
    return &it->second;
  }
  if (auto it = kernels.find(fallback); it != kernels.end()) return &it->second;
  return nullptr;
}

}  // namespace

int plugin_main(int argc, char** argv, const KernelRegistry& kernels,
                const std::map<std::string, std::string>& runtime) {
  const std::string fallback = argc > 1 ? argv[1] : "";
  const int in = STDIN_FILENO;
  const int out = STDOUT_FILENO;
  try {
    while (true) {
      Frame frame;
      if (read_frame(in, frame, std::nullopt) != ReadStatus::kOk) return 0;
      switch (frame.type) {
        case FrameType::kHello: {
          nlohmann::json versions = nlohmann::json::object();
          versions["fib-plugin"] = "1.0";
#ifdef __VERSION__
          versions["cxx"] = __VERSION__;
#endif
          for (const auto& [k, v] : runtime) versions[k] = v;
          write_frame(out, Frame::text(FrameType::kHello, versions.dump()));
          break;
        }
        case FrameType::kPing:
          write_frame(out, Frame{FrameType::kPing, {}});
          break;
        case FrameType::kBye:
          return 0;
        case FrameType::kRun: {
          Frame reply;
          try {
            const RunRequest req = decode_run_payload(frame.payload);
            const KernelFn* fn = pick(kernels, req, fallback);
            if (fn == nullptr) {
              reply = Frame::text(FrameType::kError,
                                  "unknown entry symbol '" + symbol_of(req.entry_point) + "'");
            } else {
              reply = Frame{FrameType::kResult, encode_result_payload((*fn)(req))};
            }
          } catch (const std::exception& e) {
            reply = Frame::text(FrameType::kError, e.what());
          }
          write_frame(out, reply);
          break;
        }
        default:
          write_frame(out, Frame::text(FrameType::kError,
                                       "unexpected " +
                                           std::string(frame_type_name(frame.type)) +
                                           " frame"));
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "plugin: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace fib
