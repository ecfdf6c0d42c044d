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

#ifndef FIB_TESTS_TEST_UTIL_H_
#define FIB_TESTS_TEST_UTIL_H_

#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fib/trace.h"

namespace fib::testing {

inline std::filesystem::path data_dir() { return FIB_TEST_DATA; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> n{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fib-test-" + std::to_string(::getpid()) + "-" + std::to_string(n++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

// A shell-launched solution that execs the test plugin with `symbol`.
inline Solution plugin_solution(const std::string& name, const std::string& definition,
                                const std::string& symbol,
                                const std::map<std::string, std::string>& env = {},
                                const std::string& author = "tester") {
  Solution s;
  s.name = name;
  s.definition = definition;
  s.author = author;
  s.language = "shell";
  s.target_hardware = {"cpu"};
  s.entry_point = "run.sh::" + symbol;
  std::string script = "exec env";
  for (const auto& [k, v] : env) script += " " + k + "='" + v + "'";
  script += " '" + std::string(FIB_TEST_PLUGIN) + "' \"$1\"\n";
  s.sources = {{"run.sh", script}};
  return s;
}

inline Definition load_definition(const std::string& file) {
  return parse_definition_text(read_file(data_dir() / "defs" / (file + ".json")));
}

// A workload with every input random.
inline Workload random_workload(const Definition& d, const std::string& uuid,
                                std::map<std::string, int64_t> axes) {
  Workload w;
  w.uuid = uuid;
  w.axes = std::move(axes);
  for (const auto& [name, spec] : d.inputs) w.inputs.push_back({name, InputSpec{}});
  return w;
}

// A workload-only trace document, as a dataset stores it.
inline void write_workload_doc(const std::filesystem::path& dir, const std::string& definition,
                               const Workload& w) {
  TraceRecord t;
  t.definition = definition;
  t.workload = w;
  write_file(dir / "workloads" / (w.uuid + ".json"), serialize_trace(t));
}

inline void write_definition_doc(const std::filesystem::path& dir, const Definition& d) {
  write_file(dir / "definitions" / (d.name + ".json"), serialize_definition(d));
}

inline void write_solution_doc(const std::filesystem::path& dir, const Solution& s) {
  write_file(dir / "solutions" / (s.name + ".json"), serialize_solution(s));
}

// Runs a shell command line, capturing stdout and stderr together.
struct CommandResult {
  int exit_code = -1;
  std::string output;
};

inline CommandResult run_command(const std::string& command) {
  CommandResult r;
  FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

}  // namespace fib::testing

#endif  // FIB_TESTS_TEST_UTIL_H_
