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

#ifndef FIB_PROCESS_H_
#define FIB_PROCESS_H_

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fib {

struct LaunchSpec {
  std::vector<std::string> argv;  // argv[0] is resolved through PATH
  std::filesystem::path cwd;      // empty: inherit
  std::vector<std::pair<std::string, std::string>> env;  // added to the parent env
  std::filesystem::path stderr_path;  // empty: /dev/null
};

// A spawned child with piped stdin/stdout, in its own process group.
// The destructor kills and reaps whatever is still running.
class ChildProcess {
 public:
  ChildProcess() = default;
  ~ChildProcess();
  ChildProcess(ChildProcess&& other) noexcept;
  ChildProcess& operator=(ChildProcess&& other) noexcept;
  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  // Throws Error(kIo) if the process cannot be created.
  static ChildProcess spawn(const LaunchSpec& spec);

  bool valid() const { return pid_ > 0; }
  pid_t pid() const { return pid_; }
  int stdin_fd() const { return in_fd_; }
  int stdout_fd() const { return out_fd_; }

  void close_stdin();
  // SIGKILL to the whole group, then reap.
  void kill();
  bool alive();
  // Exit status if the child ended within `timeout`: the exit code, or
  // -signal when it was killed by a signal.
  std::optional<int> wait_exit(std::chrono::milliseconds timeout);

 private:
  void reset() noexcept;

  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::optional<int> status_;
};

// Ignores SIGPIPE once per process so writes to dead plugins surface as EPIPE.
void ignore_sigpipe();

}  // namespace fib

#endif  // FIB_PROCESS_H_
