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

#include "fib/engine.h"

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <ctime>

#include "fib/binding.h"
#include "fib/error.h"
#include "fib/reference.h"
#include "fib/rng.h"

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace fib {

namespace {

constexpr const char* kHarnessVersion = "0.1.0";
constexpr auto kBootstrapTimeout = std::chrono::seconds(30);

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

std::string host_name() {
  char buf[256] = {};
  if (::gethostname(buf, sizeof(buf) - 1) != 0) return "localhost";
  return buf;
}

std::string seed_hex(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Evaluation failed(EvalStatus status, std::string log, Environment env) {
  Evaluation e;
  e.status = status;
  e.environment = std::move(env);
  e.timestamp = now_timestamp();
  e.log = std::move(log);
  return e;
}

// Declared outputs must come back with the declared dtype and shape.
std::string output_mismatch(const Definition& d, const BoundShapes& bound,
                            const TensorMap& outputs) {
  for (const auto& [name, spec] : d.outputs) {
    const Tensor* t = outputs.find(name);
    if (t == nullptr) return "missing output '" + name + "'";
    if (t->dtype() != spec.dtype) {
      return "output '" + name + "' has dtype " + std::string(dtype_name(t->dtype())) +
             ", expected " + std::string(dtype_name(spec.dtype));
    }
    const Shape& want = bound.shapes.at(name);
    if (t->shape() != want) {
      return "output '" + name + "' has shape " + shape_to_string(t->shape()) +
             ", expected " + shape_to_string(want);
    }
  }
  return {};
}

}  // namespace

std::string_view exec_mode_name(ExecMode mode) {
  return mode == ExecMode::kIsolated ? "isolated" : "persistent";
}

ExecMode parse_exec_mode(std::string_view text) {
  if (text == "isolated") return ExecMode::kIsolated;
  if (text == "persistent") return ExecMode::kPersistent;
  throw Error(ErrorCode::kSchema, "unknown executor mode '" + std::string(text) + "'");
}

ExecStatus exec_status_of(const RunOutcome& outcome) {
  switch (outcome.kind) {
    case RunOutcome::Kind::kOk: return ExecStatus::kOk;
    case RunOutcome::Kind::kTimeout: return ExecStatus::kTimeout;
    default: return ExecStatus::kFailedRuntime;
  }
}

EvalStatus eval_status_of(ExecStatus status) {
  switch (status) {
    case ExecStatus::kOk: return EvalStatus::kPassed;
    case ExecStatus::kFailedCompile: return EvalStatus::kFailedCompile;
    case ExecStatus::kTimeout: return EvalStatus::kTimeout;
    case ExecStatus::kFailedRuntime: break;
  }
  return EvalStatus::kFailedRuntime;
}

std::string now_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(
                          now.time_since_epoch()).count() % 1000000;
  std::tm tm{};
  ::localtime_r(&secs, &tm);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[80];
  std::snprintf(out, sizeof(out), "%s.%06lld", buf, static_cast<long long>(micros));
  return out;
}

uint64_t tensor_digest(const Tensor& t) {
  const auto bytes = t.to_bytes();
  uint64_t h = fnv1a64({reinterpret_cast<const char*>(bytes.data()), bytes.size()});
  h = mix_seed(h, static_cast<uint64_t>(t.dtype()));
  return mix_seed(h, fnv1a64(shape_to_string(t.shape())));
}

// A plugin process borrowed for one execution or timing window. Isolated
// leases own a fresh process and tear it down on release.
class Engine::Lease {
 public:
  PluginSession* session = nullptr;
  std::unique_ptr<PluginSession> owned;
  std::string content_hash;
  std::string solution;
  bool persistent = false;

  Lease() = default;
  Lease(Lease&&) = default;
  Lease& operator=(Lease&&) = default;
  ~Lease() {
    if (owned) owned->close();
  }
};

Engine::Engine(EngineConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.timing.runs < 1) throw Error(ErrorCode::kSchema, "timed runs must be >= 1");
  if (cfg_.timing.warmup < 0) throw Error(ErrorCode::kSchema, "warmup runs must be >= 0");
  if (cfg_.work_dir.empty()) cfg_.work_dir = fs::temp_directory_path() / "fib-work";
  if (cfg_.host_label.empty()) cfg_.host_label = host_name();
  fs::create_directories(cfg_.work_dir / "staged");
  fs::create_directories(cfg_.work_dir / "logs");
  ignore_sigpipe();
}

std::string Engine::harness_version() { return kHarnessVersion; }

std::shared_ptr<const StagedSolution> Engine::stage(const Solution& s) {
  const std::string hash = solution_content_hash(s);
  std::lock_guard<std::mutex> g(stage_mu_);
  if (auto it = staged_.find(hash); it != staged_.end()) return it->second;
  auto staged = std::make_shared<const StagedSolution>(
      stage_solution(s, cfg_.work_dir / "staged"));
  staged_[hash] = staged;
  return staged;
}

Engine::Lease Engine::lease(const Solution& s, ExecMode mode, Worker& worker,
                            ExecResult& failure) {
  Lease l;
  l.solution = s.name;
  l.persistent = mode == ExecMode::kPersistent;
  if (worker.state() == WorkerState::kDead) worker.respawn();
  std::shared_ptr<const StagedSolution> staged;
  try {
    staged = stage(s);
  } catch (const Error& e) {
    failure.status = ExecStatus::kFailedCompile;
    failure.detail = std::string("staging failed: ") + e.what();
    return l;
  }
  l.content_hash = staged->content_hash;
  if (staged->build_failed) {
    failure.status = ExecStatus::kFailedCompile;
    failure.detail = "build failed:\n" + staged->build_log;
    return l;
  }
  if (l.persistent) {
    l.session = worker.find_session(l.content_hash);
    if (l.session != nullptr) return l;
  }
  static std::atomic<uint64_t> counter{0};
  const fs::path err = cfg_.work_dir / "logs" /
                       ("w" + std::to_string(worker.id()) + "-" + staged->content_hash + "-" +
                        std::to_string(::getpid()) + "-" + std::to_string(counter++) +
                        ".stderr");
  try {
    auto session = PluginSession::start(*staged, err, kBootstrapTimeout);
    if (l.persistent) {
      l.session = worker.put_session(l.content_hash, s.name, std::move(session));
    } else {
      l.owned = std::move(session);
      l.session = l.owned.get();
    }
  } catch (const Error& e) {
    failure.status = ExecStatus::kFailedCompile;
    failure.detail = std::string("plugin bootstrap failed: ") + e.what();
  }
  return l;
}

void Engine::record_frame(int worker, const std::string& solution,
                          const RunRequest& request) {
  if (!cfg_.record_frames) return;
  FrameRecord rec;
  rec.worker = worker;
  rec.solution = solution;
  rec.type = FrameType::kRun;
  for (const auto& [name, t] : request.inputs) rec.tensors.emplace_back(name, tensor_digest(t));
  std::lock_guard<std::mutex> g(log_mu_);
  frames_.push_back(std::move(rec));
}

std::vector<FrameRecord> Engine::frame_log() const {
  std::lock_guard<std::mutex> g(log_mu_);
  return frames_;
}

void Engine::clear_frame_log() {
  std::lock_guard<std::mutex> g(log_mu_);
  frames_.clear();
}

RunOutcome Engine::send_encoded(Lease& l, Worker& worker, std::span<const uint8_t> payload,
                                std::chrono::milliseconds timeout) {
  RunOutcome out = l.session->run(payload, timeout, worker.take_kill());
  if (out.kind != RunOutcome::Kind::kOk && out.kind != RunOutcome::Kind::kError) {
    after_failure(l, worker, out);
  }
  return out;
}

RunOutcome Engine::send_run(Lease& l, const Solution& s, Worker& worker,
                            const RunRequest& request, std::chrono::milliseconds timeout) {
  record_frame(worker.id(), s.name, request);
  const std::vector<uint8_t> payload = encode_run_payload(request);
  return send_encoded(l, worker, payload, timeout);
}

void Engine::after_failure(Lease& l, Worker& worker, const RunOutcome& outcome) {
  (void)outcome;
  if (l.persistent) {
    // The worker's long-lived process is gone or untrustworthy.
    worker.drop_session(l.content_hash);
    l.session = nullptr;
    worker.mark_dead();
  }
}

ExecResult Engine::execute_locked(const Solution& s, const RunRequest& request,
                                  ExecMode mode, Worker& worker,
                                  std::chrono::milliseconds timeout) {
  ExecResult r;
  Lease l = lease(s, mode, worker, r);
  if (r.status != ExecStatus::kOk) return r;
  r.versions = l.session->versions();
  const RunOutcome out = send_run(l, s, worker, request, timeout);
  r.status = exec_status_of(out);
  r.detail = out.detail;
  r.process_died = out.kind == RunOutcome::Kind::kDied;
  r.outputs = std::move(out.outputs);
  return r;
}

ExecResult Engine::bootstrap(const Solution& s, Worker& worker) {
  Worker::Lock lock = worker.acquire();
  ExecResult r;
  Lease l = lease(s, ExecMode::kPersistent, worker, r);
  if (r.status == ExecStatus::kOk) r.versions = l.session->versions();
  return r;
}

ExecResult Engine::execute_solution(const Solution& s, const RunRequest& request,
                                    ExecMode mode, Worker& worker,
                                    std::optional<std::chrono::milliseconds> timeout) {
  Worker::Lock lock = worker.acquire();
  worker.set_busy(true);
  ExecResult r = execute_locked(s, request, mode, worker, timeout.value_or(cfg_.timing.timeout));
  worker.set_busy(false);
  return r;
}

TimingResult Engine::time_locked(const Solution& s, const RunRequest& request, ExecMode mode,
                                 Worker& worker, const TimingConfig& timing) {
  TimingResult t;
  if (timing.runs < 1) throw Error(ErrorCode::kSchema, "timed runs must be >= 1");
  Lease l = lease(s, mode, worker, t.exec);
  if (t.exec.status != ExecStatus::kOk) return t;
  t.exec.versions = l.session->versions();
  record_frame(worker.id(), s.name, request);
  const std::vector<uint8_t> payload = encode_run_payload(request);
  const int total = timing.warmup + timing.runs;
  double sum = 0.0;
  for (int i = 0; i < total; ++i) {
    const auto t0 = Clock::now();
    RunOutcome out = send_encoded(l, worker, payload, timing.timeout);
    const auto t1 = Clock::now();
    if (out.kind != RunOutcome::Kind::kOk) {
      t.exec.status = exec_status_of(out);
      t.exec.detail = out.detail;
      t.exec.process_died = out.kind == RunOutcome::Kind::kDied;
      return t;
    }
    if (i >= timing.warmup) {
      t.samples_ms.push_back(ms_between(t0, t1));
      sum += t.samples_ms.back();
    }
    if (i + 1 == total) t.exec.outputs = std::move(out.outputs);
  }
  t.latency_ms = sum / static_cast<double>(timing.runs);
  return t;
}

TimingResult Engine::time_solution(const Solution& s, const RunRequest& request,
                                   ExecMode mode, Worker& worker,
                                   const TimingConfig& timing) {
  Worker::Lock lock = worker.acquire();
  worker.set_busy(true);
  TimingResult t = time_locked(s, request, mode, worker, timing);
  worker.set_busy(false);
  return t;
}

Environment Engine::environment(const std::map<std::string, std::string>& versions) const {
  Environment env;
  env.hardware = cfg_.host_label;
  env.libs["fib"] = kHarnessVersion;
  for (const auto& [k, v] : versions) env.libs[k] = v;
  return env;
}

TensorMap Engine::prepare_inputs(const Definition& d, const Workload& w,
                                 uint64_t* seed_base_out) const {
  const BoundShapes bound = bind_workload(d, w);
  const uint64_t seed_base = workload_seed_base(w, cfg_.session_seed);
  TensorMap inputs = materialize_inputs(d, w, bound, seed_base, cfg_.data_root);
  prepare_structured_inputs(d, w, bound, inputs, seed_base);
  check_deferred_constraints(bound, inputs);
  if (seed_base_out != nullptr) *seed_base_out = seed_base;
  return inputs;
}

EvalOutcome Engine::evaluate(const Definition& d, const Workload& w, const Solution& s,
                             ExecMode mode, Worker& worker) {
  const auto wall0 = Clock::now();
  EvalOutcome result;
  result.mode = mode;
  auto finish = [&](Evaluation e) {
    result.evaluation = std::move(e);
    result.wall_ms = ms_between(wall0, Clock::now());
    return result;
  };

  Worker::Lock lock = worker.acquire();
  worker.set_busy(true);
  struct Idle {
    Worker& w;
    ~Idle() { w.set_busy(false); }
  } idle{worker};
  if (worker.state() == WorkerState::kDead) worker.respawn();

  // 1. Inputs and reference outputs (harness-side; failures here are not the
  //    solution's fault but still produce a record).
  BoundShapes bound;
  TensorMap inputs;
  uint64_t seed_base = 0;
  ReferenceEntry reference;
  try {
    bound = bind_workload(d, w);
    inputs = prepare_inputs(d, w, &seed_base);
    const std::string ref_key = d.name + "|" + w.uuid + "|" + seed_hex(seed_base);
    if (const ReferenceEntry* hit = worker.find_reference(ref_key)) {
      reference = *hit;
    } else {
      ReferenceEntry computed;
      computed.outputs = run_reference(d, inputs, seed_base);
      const int total = cfg_.timing.warmup + cfg_.timing.runs;
      double sum = 0.0;
      for (int i = 0; i < total; ++i) {
        const auto t0 = Clock::now();
        const TensorMap out = run_reference(d, inputs, seed_base);
        const auto t1 = Clock::now();
        if (i >= cfg_.timing.warmup) sum += ms_between(t0, t1);
      }
      computed.latency_ms = sum / static_cast<double>(cfg_.timing.runs);
      reference = computed;
      worker.put_reference(ref_key, d.name, std::move(computed));
    }
  } catch (const Error& e) {
    return finish(failed(EvalStatus::kFailedRuntime,
                         "harness: " + std::string(error_code_name(e.code())) + ": " + e.what(),
                         environment({})));
  }

  RunRequest request;
  request.inputs = inputs;
  request.entry_point = s.entry_point;
  for (const auto& [k, v] : bound.axes) request.axes[k] = v;
  request.seed = seed_base;

  // 2. Correctness on one leased process.
  ExecResult exec;
  Lease l = lease(s, mode, worker, exec);
  if (exec.status != ExecStatus::kOk) {
    return finish(failed(eval_status_of(exec.status), exec.detail, environment({})));
  }
  const Environment env = environment(l.session->versions());
  auto runtime_failure = [&](const RunOutcome& out) {
    result.retryable = out.kind == RunOutcome::Kind::kDied;
    std::string log = out.detail;
    return finish(failed(eval_status_of(exec_status_of(out)), log, env));
  };

  ValidationVerdict verdict;
  verdict.passed = true;
  const auto op = resolve_op_type(d.op_type);
  if (op == OpType::kSamplingTopKTopP) {
    const Tensor& probs = inputs[0].second;
    const Tensor& top_k = inputs[1].second;
    const Tensor& top_p = inputs[2].second;
    const int64_t rows = probs.shape()[0], vocab = probs.shape()[1];
    const std::string& batch_axis = d.inputs[0].second.shape[0];
    std::optional<RunOutcome> crash;
    for (int64_t b = 0; b < rows && verdict.passed; ++b) {
      std::vector<double> p(static_cast<std::size_t>(vocab));
      std::vector<float> row(static_cast<std::size_t>(vocab));
      for (int64_t i = 0; i < vocab; ++i) {
        row[i] = probs.floats()[static_cast<std::size_t>(b * vocab + i)];
        p[i] = row[i];
      }
      const int64_t k = static_cast<int64_t>(top_k.value(b));
      const double pp = top_p.value(b);
      Sampler sampler = [&](int64_t count, uint64_t seed) {
        RunRequest r;
        r.entry_point = s.entry_point;
        r.axes = request.axes;
        r.axes[batch_axis] = count;
        r.seed = seed;
        std::vector<float> rep;
        rep.reserve(static_cast<std::size_t>(count * vocab));
        for (int64_t c = 0; c < count; ++c) rep.insert(rep.end(), row.begin(), row.end());
        r.inputs.set(inputs[0].first, Tensor::from_floats(probs.dtype(), {count, vocab},
                                                          std::move(rep)));
        r.inputs.set(inputs[1].first,
                     Tensor::from_ints(top_k.dtype(), {count},
                                       std::vector<int64_t>(static_cast<std::size_t>(count), k)));
        r.inputs.set(inputs[2].first,
                     Tensor::from_floats(top_p.dtype(), {count},
                                         std::vector<float>(static_cast<std::size_t>(count),
                                                            static_cast<float>(pp))));
        RunOutcome out = send_run(l, s, worker, r, cfg_.timing.timeout);
        if (out.kind != RunOutcome::Kind::kOk) {
          crash = out;
          throw Error(ErrorCode::kSamplerCrashed, out.detail);
        }
        const Tensor* samples = out.outputs.find(d.outputs[0].first);
        if (samples == nullptr || samples->numel() != count || !is_integer(samples->dtype())) {
          throw Error(ErrorCode::kSamplerCrashed, "sampler output has wrong name, shape or dtype");
        }
        return std::vector<int64_t>(samples->ints().begin(), samples->ints().end());
      };
      StochasticConfig sc = cfg_.stochastic;
      sc.seed = mix_seed(seed_base, static_cast<uint64_t>(b));
      try {
        merge_verdict(verdict, check_stochastic(sampler, p, k, pp, sc, cfg_.stochastic_chunk));
      } catch (const Error& e) {
        if (crash) return runtime_failure(*crash);
        verdict.passed = false;
        verdict.detail = e.what();
      }
    }
  } else {
    const RunOutcome out = send_run(l, s, worker, request, cfg_.timing.timeout);
    if (out.kind != RunOutcome::Kind::kOk) return runtime_failure(out);
    const std::string mismatch = output_mismatch(d, bound, out.outputs);
    if (!mismatch.empty()) {
      verdict.passed = false;
      verdict.detail = mismatch;
    } else {
      for (const auto& [name, spec] : d.outputs) {
        const Tensor& got = out.outputs.at(name);
        const Tensor& want = reference.outputs.at(name);
        const auto over = cfg_.tolerance_overrides.find(spec.dtype);
        const Tolerance tol =
            over != cfg_.tolerance_overrides.end() ? over->second : default_tolerance(spec.dtype);
        ValidationVerdict v = spec.dtype == DType::kF8E4M3
                                  ? check_matched_ratio(got, want, tol, cfg_.matched_ratio)
                                  : check_deterministic(got, want, tol);
        if (!v.passed && !v.detail.empty()) v.detail = name + ": " + v.detail;
        merge_verdict(verdict, v);
      }
    }
  }

  Correctness correctness;
  correctness.max_absolute_error = verdict.max_absolute_error;
  correctness.max_relative_error = verdict.max_relative_error;
  correctness.extra = verdict.extra;
  if (!verdict.passed) {
    Evaluation e = failed(EvalStatus::kFailedCorrectness, verdict.detail, env);
    e.correctness = correctness;
    return finish(std::move(e));
  }

  // 3. Timing. Isolated mode times on a fresh process of its own.
  if (!l.persistent) l = Lease();
  const TimingResult timing = time_locked(s, request, mode, worker, cfg_.timing);
  if (timing.exec.status != ExecStatus::kOk) {
    result.retryable = timing.exec.process_died;
    Evaluation e = failed(eval_status_of(timing.exec.status), timing.exec.detail, env);
    e.correctness = correctness;
    return finish(std::move(e));
  }

  Evaluation e;
  e.status = EvalStatus::kPassed;
  e.environment = env;
  e.timestamp = now_timestamp();
  e.correctness = correctness;
  Performance perf;
  perf.latency_ms = timing.latency_ms;
  perf.reference_latency_ms = reference.latency_ms;
  perf.speedup_factor = timing.latency_ms > 0.0 ? reference.latency_ms / timing.latency_ms : 0.0;
  e.performance = perf;
  return finish(std::move(e));
}

}  // namespace fib
