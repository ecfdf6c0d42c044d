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

#include "fib/staging.h"

#include <sys/stat.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fib/error.h"
#include "fib/rng.h"

#ifndef FIB_INCLUDE_DIR
#define FIB_INCLUDE_DIR ""
#endif
#ifndef FIB_VENDOR_DIR
#define FIB_VENDOR_DIR ""
#endif
#ifndef FIB_PLUGIN_LIBS
#define FIB_PLUGIN_LIBS ""
#endif

namespace fs = std::filesystem;

namespace fib {

namespace {

constexpr const char* kPluginBinary = "plugin.bin";
constexpr const char* kBuildLog = "build.log";
constexpr const char* kBuildFailed = "BUILD_FAILED";
constexpr auto kBuildTimeout = std::chrono::minutes(5);

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void absorb(uint64_t& h, std::string_view s) {
  h = mix_seed(h, fnv1a64(s));
  h = mix_seed(h, s.size());
}

bool is_cpp(const std::string& language) {
  return language == "cpp" || language == "c++" || language == "cxx";
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
}

// Rejects absolute paths and parent references so sources stay in the sandbox.
fs::path safe_relative(const std::string& path) {
  const fs::path p(path);
  if (path.empty() || p.is_absolute()) {
    throw Error(ErrorCode::kSchema, "source path must be relative: '" + path + "'");
  }
  for (const auto& part : p) {
    if (part == "..") throw Error(ErrorCode::kSchema, "source path escapes sandbox: " + path);
  }
  return p;
}

std::vector<std::string> split_libs(const std::string& joined) {
  std::vector<std::string> out;
  std::stringstream ss(joined);
  std::string item;
  while (std::getline(ss, item, '|')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Returns the build log; throws nothing, failure is reported through `ok`.
std::string build_cpp(const Solution& s, const fs::path& dir, bool& ok) {
  std::vector<std::string> argv;
  const char* cxx = std::getenv("FIB_CXX");
  argv.push_back(cxx != nullptr && *cxx != '\0' ? cxx : "c++");
  for (const char* flag : {"-std=c++20", "-O2", "-pthread"}) argv.push_back(flag);
  argv.push_back(std::string("-I") + FIB_INCLUDE_DIR);
  argv.push_back(std::string("-I") + FIB_VENDOR_DIR);
  bool has_main = false;
  for (const auto& src : s.sources) {
    const auto ext = fs::path(src.path).extension();
    if (ext == ".cc" || ext == ".cpp" || ext == ".cxx") argv.push_back(src.path);
    if (src.content.find("plugin_main(") != std::string::npos) has_main = true;
  }
  if (!has_main) {
    const std::string sym = s.entry_symbol();
    std::string main_src =
        "#include \"fib/plugin.h\"\n"
        "fib::TensorMap " + sym + "(const fib::RunRequest& request);\n"
        "int main(int argc, char** argv) {\n"
        "  return fib::plugin_main(argc, argv, {{\"" + sym + "\", &" + sym + "}},\n"
        "                          {{\"language\", \"cpp\"}});\n"
        "}\n";
    write_text(dir / "fib_generated_main.cc", main_src);
    argv.push_back("fib_generated_main.cc");
  }
  for (const auto& lib : split_libs(FIB_PLUGIN_LIBS)) argv.push_back(lib);
  argv.push_back("-o");
  argv.push_back(kPluginBinary);

  const fs::path log = dir / kBuildLog;
  std::string cmdline;
  for (const auto& a : argv) cmdline += a + " ";
  write_text(log, "$ " + cmdline + "\n");
  try {
    ChildProcess cc = ChildProcess::spawn({argv, dir, {}, log});
    cc.close_stdin();
    const auto status = cc.wait_exit(std::chrono::duration_cast<std::chrono::milliseconds>(
        kBuildTimeout));
    if (!status) {
      cc.kill();
      ok = false;
      return read_text(log) + "\nbuild timed out\n";
    }
    ok = *status == 0;
  } catch (const Error& e) {
    ok = false;
    return read_text(log) + "\n" + e.what() + "\n";
  }
  return read_text(log);
}

LaunchSpec launch_for(const Solution& s, const fs::path& dir, bool& supported) {
  LaunchSpec spec;
  spec.cwd = dir;
  supported = true;
  const std::string file = s.entry_file();
  const std::string sym = s.entry_symbol();
  if (s.language == "shell" || s.language == "sh") {
    spec.argv = {"/bin/sh", file, sym};
  } else if (s.language == "python") {
    spec.argv = {"python3", "-u", file, sym};
  } else if (s.language == "executable") {
    spec.argv = {(dir / file).string(), sym};
  } else if (is_cpp(s.language)) {
    spec.argv = {(dir / kPluginBinary).string(), sym};
  } else {
    supported = false;
  }
  return spec;
}

}  // namespace

std::string solution_content_hash(const Solution& s) {
  uint64_t h = 0x6669622d73746167ULL;
  absorb(h, s.language);
  absorb(h, s.entry_point);
  for (const auto& src : s.sources) {
    absorb(h, src.path);
    absorb(h, src.content);
  }
  if (is_cpp(s.language)) absorb(h, FIB_PLUGIN_LIBS);
  return hex64(h);
}

StagedSolution stage_solution(const Solution& s, const fs::path& cache_root) {
  StagedSolution out;
  out.content_hash = solution_content_hash(s);
  out.dir = cache_root / out.content_hash;

  bool supported = false;
  out.launch = launch_for(s, out.dir, supported);
  if (!supported) {
    out.build_failed = true;
    out.build_log = "no launcher for language '" + s.language + "'";
    return out;
  }

  if (!fs::exists(out.dir)) {
    static std::atomic<uint64_t> counter{0};
    const fs::path tmp = cache_root / (".tmp-" + out.content_hash + "-" +
                                       std::to_string(::getpid()) + "-" +
                                       std::to_string(counter.fetch_add(1)));
    fs::create_directories(tmp);
    for (const auto& src : s.sources) write_text(tmp / safe_relative(src.path), src.content);
    if (s.language == "executable") {
      fs::permissions(tmp / s.entry_file(), fs::perms::owner_exec | fs::perms::group_exec,
                      fs::perm_options::add);
    }
    if (is_cpp(s.language)) {
      bool ok = false;
      const std::string log = build_cpp(s, tmp, ok);
      if (!ok) write_text(tmp / kBuildFailed, log);
    }
    std::error_code ec;
    fs::rename(tmp, out.dir, ec);
    if (ec) fs::remove_all(tmp);  // another stager won the race
  } else {
    out.reused = true;
  }

  if (fs::exists(out.dir / kBuildFailed)) {
    out.build_failed = true;
    out.build_log = read_text(out.dir / kBuildFailed);
  } else if (fs::exists(out.dir / kBuildLog)) {
    out.build_log = read_text(out.dir / kBuildLog);
  }
  return out;
}

}  // namespace fib
