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

#ifndef FIB_SCHEDULER_H_
#define FIB_SCHEDULER_H_

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fib/engine.h"
#include "fib/trace.h"
#include "fib/worker.h"

namespace fib {

// --- Assignment ------------------------------------------------------------

// Row-major square cost matrix.
struct CostMatrix {
  std::size_t n = 0;
  std::vector<double> cells;
  std::size_t real_rows = 0;  // rows past this are padding
  std::size_t real_cols = 0;  // columns past this are padding

  double at(std::size_t r, std::size_t c) const { return cells[r * n + c]; }
  double& at(std::size_t r, std::size_t c) { return cells[r * n + c]; }
};

// Cost of padded cells. Large enough to never beat a real pairing, small
// enough that sums of n of them stay exact in a double.
inline constexpr double kSentinelCost = 1e12;

struct Assignment {
  std::vector<int> row_to_col;  // perfect matching over the padded matrix
  double cost = 0.0;
};

// Minimum-cost perfect matching. Among optimal matchings the lexicographically
// smallest row_to_col is returned, so equal costs resolve the same way on
// every run. Throws Error(kSchema) for non-square or negative input.
Assignment hungarian_assign(const CostMatrix& m);
// Square matrix helper: cells given row-major.
Assignment hungarian_assign(std::size_t n, const std::vector<double>& cells);

// --- Cost model -------------------------------------------------------------

class CostModel {
 public:
  explicit CostModel(double alpha = 0.3, double default_ms = 1.0);

  double alpha() const { return alpha_; }
  double default_ms() const { return default_ms_; }
  double estimate(const std::string& solution, int worker) const;
  bool seen(const std::string& solution, int worker) const;
  // cost' = alpha * observed + (1 - alpha) * cost; the first observation of a
  // pair initializes it. Non-positive or non-finite observations are ignored.
  void update(const std::string& solution, int worker, double observed_ms);
  const std::map<std::pair<std::string, int>, double>& entries() const { return costs_; }

 private:
  double alpha_;
  double default_ms_;
  std::map<std::pair<std::string, int>, double> costs_;
};

// --- Jobs --------------------------------------------------------------------

struct Job {
  std::string definition;
  std::string workload;  // uuid
  std::string solution;
  int attempts = 0;
  std::optional<ExecMode> mode_override;
  int persistent_failures = 0;
};

struct SchedulerConfig {
  ExecMode mode = ExecMode::kPersistent;
  double gamma_cache = 0.5;  // discount when the worker has the solution warm
  double gamma_ref = 0.8;    // discount when the worker holds the reference
  std::size_t batch_size = 0;  // 0: one job per live worker
  int defer_after = 2;         // persistent failures before isolated runs
  int max_retries = 3;
  // Times one worker may be respawned into the spare pool; negative: no limit.
  int max_respawns = -1;
  std::chrono::milliseconds health_timeout{2000};
};

// cm estimates discounted by residency, padded to square with kSentinelCost.
// Throws Error(kSchema) when either list is empty.
CostMatrix build_cost_matrix(const std::vector<Job>& jobs, const std::vector<Worker*>& workers,
                             const CostModel& cm, const SchedulerConfig& cfg);

// What the jobs refer to.
struct JobCatalog {
  std::map<std::string, Definition> definitions;
  std::map<std::string, Workload> workloads;  // by uuid
  std::map<std::string, Solution> solutions;
};

// Kill the plugin serving `worker` right after its next RUN in `round`.
struct InjectedFault {
  int round = 0;
  int worker = 0;
};

struct Attempt {
  int round = 0;
  std::size_t job = 0;
  int worker = 0;
  ExecMode mode = ExecMode::kPersistent;
  EvalStatus status = EvalStatus::kPassed;
  bool retryable = false;
  bool final = false;
};

struct ScheduleReport {
  std::vector<TraceRecord> records;  // one per job, in completion order
  std::vector<Attempt> attempts;
  int rounds = 0;
  int respawns = 0;
};

using RecordSink = std::function<void(std::size_t job, const TraceRecord&)>;

// Rounds of cost matrix -> assignment -> concurrent dispatch -> collect ->
// cost update, with health checks between rounds. `workers` are the active
// slots; `spares` replace slots that die. Every job ends with exactly one
// record. Throws Error(kSchedulerStalled) when no live worker remains.
ScheduleReport schedule_loop(std::vector<Job> jobs, const JobCatalog& catalog,
                             std::vector<Worker*> workers, std::vector<Worker*> spares,
                             Engine& engine, CostModel& cm, const SchedulerConfig& cfg,
                             const std::vector<InjectedFault>& faults = {},
                             const RecordSink& sink = {});

}  // namespace fib

#endif  // FIB_SCHEDULER_H_
