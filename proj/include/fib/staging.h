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

#ifndef FIB_STAGING_H_
#define FIB_STAGING_H_

#include <filesystem>
#include <string>

#include "fib/process.h"
#include "fib/trace.h"

namespace fib {

// A solution's sources written to a sandbox directory keyed by content hash,
// plus how to launch it. Directories persist across runs, so a second staging
// of the same content (or a second harness process) skips the build.
struct StagedSolution {
  std::string content_hash;
  std::filesystem::path dir;
  LaunchSpec launch;  // stderr_path left for the caller
  bool build_failed = false;
  std::string build_log;
  bool reused = false;  // true when the directory already existed
};

// Launchers by language:
//   shell       /bin/sh <entry_file> <symbol>
//   python      python3 -u <entry_file> <symbol>
//   executable  ./<entry_file> <symbol>
//   cpp         sources compiled with a generated main against the plugin shim;
//               if some source calls plugin_main itself no main is generated.
//               The entry symbol must be `fib::TensorMap symbol(const fib::RunRequest&)`.
StagedSolution stage_solution(const Solution& s, const std::filesystem::path& cache_root);

std::string solution_content_hash(const Solution& s);

}  // namespace fib

#endif  // FIB_STAGING_H_
