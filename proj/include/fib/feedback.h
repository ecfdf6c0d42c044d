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

#ifndef FIB_FEEDBACK_H_
#define FIB_FEEDBACK_H_

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fib/engine.h"
#include "fib/trace.h"
#include "fib/worker.h"

namespace fib {

// Supplies one candidate per iteration given the feedback so far.
class SolutionProvider {
 public:
  virtual ~SolutionProvider() = default;
  // nullopt ends the loop early.
  virtual std::optional<Solution> next(int iteration, const Definition& d,
                                       const std::string& feedback) = 0;
};

// Solution documents in a directory, taken in file-name order.
class DirectoryProvider : public SolutionProvider {
 public:
  explicit DirectoryProvider(const std::filesystem::path& dir);
  std::optional<Solution> next(int iteration, const Definition& d,
                               const std::string& feedback) override;

 private:
  std::vector<std::filesystem::path> files_;
};

// Runs `argv` once per iteration. Its stdin receives
// {"iteration", "definition", "feedback"} as JSON; its stdout must be one
// Solution document. A non-zero exit or empty output ends the loop.
class CommandProvider : public SolutionProvider {
 public:
  explicit CommandProvider(std::vector<std::string> argv,
                           std::chrono::milliseconds timeout = std::chrono::minutes(5));
  std::optional<Solution> next(int iteration, const Definition& d,
                               const std::string& feedback) override;

 private:
  std::vector<std::string> argv_;
  std::chrono::milliseconds timeout_;
};

struct FeedbackIteration {
  int iteration = 0;
  Solution solution;
  std::vector<TraceRecord> records;
  bool passed_all = false;
  double mean_speedup = 0.0;  // over the records, when passed_all
};

struct FeedbackOptions {
  ExecMode mode = ExecMode::kPersistent;
  // When set, candidates must also pass these before they count.
  std::vector<Workload> hidden_workloads;
};

struct FeedbackResult {
  Solution best;
  std::vector<TraceRecord> best_records;
  std::vector<FeedbackIteration> history;
};

// One line per workload: uuid, status, speedup or the first log line.
std::string feedback_digest(const std::vector<TraceRecord>& records);

// Index of the passing iteration with the highest mean speedup, earliest
// first among equals.
std::optional<std::size_t> select_best(const std::vector<FeedbackIteration>& history);

// Benchmarks up to `iterations` candidates and returns the passing one with
// the highest mean speedup; the earliest iteration wins ties. Throws
// Error(kNoPassingSolution) carrying the digest of every attempt when nothing
// passes.
FeedbackResult run_feedback_loop(SolutionProvider& provider, const Definition& d,
                                 const std::vector<Workload>& workloads, int iterations,
                                 Engine& engine, Worker& worker,
                                 const FeedbackOptions& options = {});

}  // namespace fib

#endif  // FIB_FEEDBACK_H_
