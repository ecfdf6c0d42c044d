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

#ifndef FIB_ENGINE_H_
#define FIB_ENGINE_H_

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fib/frame.h"
#include "fib/staging.h"
#include "fib/trace.h"
#include "fib/validators.h"
#include "fib/worker.h"

namespace fib {

enum class ExecMode { kIsolated, kPersistent };

std::string_view exec_mode_name(ExecMode mode);
ExecMode parse_exec_mode(std::string_view text);

struct TimingConfig {
  int warmup = 10;  // untimed runs
  int runs = 50;    // timed runs, >= 1
  std::chrono::milliseconds timeout{10000};  // per execution
};

struct EngineConfig {
  TimingConfig timing;
  uint64_t session_seed = 0;
  std::filesystem::path work_dir;   // staged plugins, plugin logs, lock files
  std::filesystem::path data_root;  // base for relative archive inputs
  StochasticConfig stochastic;
  int64_t stochastic_chunk = 4096;  // samples per RUN frame
  double matched_ratio = kDefaultMatchedRatio;
  std::map<DType, Tolerance> tolerance_overrides;
  std::string host_label;  // empty: the host name
  bool record_frames = false;
};

enum class ExecStatus { kOk, kFailedCompile, kFailedRuntime, kTimeout };

struct ExecResult {
  ExecStatus status = ExecStatus::kOk;
  TensorMap outputs;
  std::string detail;
  // The plugin process vanished (crash or kill). Unlike an ERROR frame this
  // may not reproduce, so schedulers may retry.
  bool process_died = false;
  std::map<std::string, std::string> versions;  // from the plugin's HELLO
};

struct TimingResult {
  ExecResult exec;
  double latency_ms = 0.0;  // mean over the timed runs
  std::vector<double> samples_ms;
};

// Host-to-plugin RUN frames, summarized: tensor names with content hashes.
struct FrameRecord {
  int worker = -1;
  std::string solution;
  FrameType type = FrameType::kRun;
  std::vector<std::pair<std::string, uint64_t>> tensors;
};

struct EvalOutcome {
  Evaluation evaluation;
  ExecMode mode = ExecMode::kPersistent;
  bool retryable = false;
  double wall_ms = 0.0;
};

uint64_t tensor_digest(const Tensor& t);

class Engine {
 public:
  explicit Engine(EngineConfig cfg);

  const EngineConfig& config() const { return cfg_; }
  static std::string harness_version();

  // Stages once per content hash for the engine's lifetime (and on disk).
  std::shared_ptr<const StagedSolution> stage(const Solution& s);

  // Starts (or finds) the persistent session for `s` on `worker` without
  // running anything. Status is kOk or kFailedCompile.
  ExecResult bootstrap(const Solution& s, Worker& worker);

  // Both take the worker lock for their whole duration.
  ExecResult execute_solution(const Solution& s, const RunRequest& request, ExecMode mode,
                              Worker& worker,
                              std::optional<std::chrono::milliseconds> timeout = {});
  TimingResult time_solution(const Solution& s, const RunRequest& request, ExecMode mode,
                             Worker& worker, const TimingConfig& timing);

  // materialize -> reference -> execute -> validate -> time -> record.
  // Never throws for plugin or workload problems; those become statuses.
  EvalOutcome evaluate(const Definition& d, const Workload& w, const Solution& s,
                       ExecMode mode, Worker& worker);
  Evaluation run_evaluation(const Definition& d, const Workload& w, const Solution& s,
                            ExecMode mode, Worker& worker) {
    return evaluate(d, w, s, mode, worker).evaluation;
  }

  // The inputs a workload materializes to, including structured inputs.
  TensorMap prepare_inputs(const Definition& d, const Workload& w,
                           uint64_t* seed_base = nullptr) const;

  std::vector<FrameRecord> frame_log() const;
  void clear_frame_log();

 private:
  class Lease;

  Lease lease(const Solution& s, ExecMode mode, Worker& worker, ExecResult& failure);
  RunOutcome send_run(Lease& lease, const Solution& s, Worker& worker,
                      const RunRequest& request, std::chrono::milliseconds timeout);
  RunOutcome send_encoded(Lease& lease, Worker& worker, std::span<const uint8_t> payload,
                          std::chrono::milliseconds timeout);
  void after_failure(Lease& lease, Worker& worker, const RunOutcome& outcome);
  ExecResult execute_locked(const Solution& s, const RunRequest& request, ExecMode mode,
                            Worker& worker, std::chrono::milliseconds timeout);
  TimingResult time_locked(const Solution& s, const RunRequest& request, ExecMode mode,
                           Worker& worker, const TimingConfig& timing);
  void record_frame(int worker, const std::string& solution, const RunRequest& request);
  Environment environment(const std::map<std::string, std::string>& versions) const;

  EngineConfig cfg_;
  std::mutex stage_mu_;
  std::map<std::string, std::shared_ptr<const StagedSolution>> staged_;
  mutable std::mutex log_mu_;
  std::vector<FrameRecord> frames_;
  uint64_t session_counter_ = 0;
};

ExecStatus exec_status_of(const RunOutcome& outcome);
EvalStatus eval_status_of(ExecStatus status);

// ISO-8601 local timestamp with microseconds, as in the dataset records.
std::string now_timestamp();

}  // namespace fib

#endif  // FIB_ENGINE_H_
