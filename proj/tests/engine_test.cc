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
#include <sys/file.h>
#include <unistd.h>

#include <set>
#include <thread>

#include <gtest/gtest.h>

#include "fib/engine.h"
#include "fib/error.h"
#include "fib/reference.h"
#include "test_util.h"

namespace fib {
namespace {

using namespace std::chrono_literals;
using testing::load_definition;
using testing::plugin_solution;
using testing::random_workload;
using testing::TempDir;

class EngineTest : public ::testing::Test {
 protected:
  EngineConfig config() {
    EngineConfig c;
    c.work_dir = tmp_.path() / "work";
    c.timing = {1, 3, 5000ms};
    c.record_frames = true;
    return c;
  }
  RunRequest gemm_request(const Definition& d, int64_t m, const std::string& sym = "gemm") {
    const Workload w = random_workload(d, "req-" + std::to_string(m), {{"M", m}});
    RunRequest r;
    r.inputs = engine_.prepare_inputs(d, w);
    r.entry_point = "run.sh::" + sym;
    r.axes = {{"M", m}};
    return r;
  }

  TempDir tmp_;
  Engine engine_{config()};
  Worker worker_{0, tmp_.path() / "locks"};
  const Definition gemm_ = load_definition("gemm_n16_k32");
};

TEST_F(EngineTest, IdentityEchoesInputs) {
  RunRequest r;
  r.inputs.set("x", Tensor::from_floats(DType::kBF16, {3}, {1, -2, 0.5}));
  r.inputs.set("i", Tensor::from_ints(DType::kI64, {2}, {5, -6}));
  r.entry_point = "run.sh::identity";
  const Solution s = plugin_solution("id", "any", "identity");
  for (ExecMode mode : {ExecMode::kIsolated, ExecMode::kPersistent}) {
    const ExecResult res = engine_.execute_solution(s, r, mode, worker_);
    ASSERT_EQ(res.status, ExecStatus::kOk) << res.detail;
    EXPECT_EQ(res.outputs, r.inputs);
    EXPECT_EQ(res.versions.at("test-plugin"), "1");
  }
  EXPECT_EQ(worker_.warm_solutions(), std::set<std::string>{"id"});
}

TEST_F(EngineTest, PersistentModeReusesTheProcess) {
  const Solution s = plugin_solution("stale", gemm_.name, "stale");
  const RunRequest a = gemm_request(gemm_, 2, "stale");
  const RunRequest b = gemm_request(gemm_, 3, "stale");
  const ExecResult first = engine_.execute_solution(s, a, ExecMode::kPersistent, worker_);
  const ExecResult second = engine_.execute_solution(s, b, ExecMode::kPersistent, worker_);
  // The memo of the first call leaks into the second: same process.
  EXPECT_EQ(second.outputs, first.outputs);
  const ExecResult fresh = engine_.execute_solution(s, b, ExecMode::kIsolated, worker_);
  EXPECT_EQ(fresh.outputs.at("C").shape(), (Shape{3, 16}));
}

TEST_F(EngineTest, SleepPastTimeoutIsKilledAndWorkerRespawned) {
  const Solution s = plugin_solution("sleepy", "any", "sleep", {{"FIB_SLEEP_MS", "10000"}});
  RunRequest r;
  r.entry_point = "run.sh::sleep";
  const auto t0 = std::chrono::steady_clock::now();
  const ExecResult res = engine_.execute_solution(s, r, ExecMode::kPersistent, worker_, 200ms);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
  EXPECT_EQ(res.status, ExecStatus::kTimeout);
  EXPECT_EQ(worker_.state(), WorkerState::kDead);
  const uint64_t gen = worker_.generation();
  const Solution id = plugin_solution("id", "any", "identity");
  RunRequest echo;
  echo.entry_point = "run.sh::identity";
  EXPECT_EQ(engine_.execute_solution(id, echo, ExecMode::kPersistent, worker_).status,
            ExecStatus::kOk);
  EXPECT_EQ(worker_.generation(), gen + 1);
  EXPECT_NE(worker_.state(), WorkerState::kDead);
}

TEST_F(EngineTest, GarbageFrameIsProtocolFailure) {
  const Solution s = plugin_solution("junk", "any", "garbage");
  RunRequest r;
  r.entry_point = "run.sh::garbage";
  const ExecResult res = engine_.execute_solution(s, r, ExecMode::kPersistent, worker_);
  EXPECT_EQ(res.status, ExecStatus::kFailedRuntime);
  EXPECT_NE(res.detail.find("protocol"), std::string::npos) << res.detail;
  EXPECT_FALSE(res.process_died);
}

TEST_F(EngineTest, ErrorFrameKeepsTheSession) {
  const Solution s = plugin_solution("raiser", "any", "raise");
  RunRequest r;
  r.entry_point = "run.sh::raise";
  const ExecResult res = engine_.execute_solution(s, r, ExecMode::kPersistent, worker_);
  EXPECT_EQ(res.status, ExecStatus::kFailedRuntime);
  EXPECT_NE(res.detail.find("on purpose"), std::string::npos);
  EXPECT_NE(worker_.state(), WorkerState::kDead);
  EXPECT_NE(worker_.find_session(engine_.stage(s)->content_hash), nullptr);
}

TEST_F(EngineTest, CrashMarksProcessDied) {
  const Solution s = plugin_solution("crasher", "any", "crash");
  RunRequest r;
  r.entry_point = "run.sh::crash";
  const ExecResult res = engine_.execute_solution(s, r, ExecMode::kPersistent, worker_);
  EXPECT_EQ(res.status, ExecStatus::kFailedRuntime);
  EXPECT_TRUE(res.process_died);
  EXPECT_EQ(worker_.state(), WorkerState::kDead);
}

TEST_F(EngineTest, BootstrapFailuresAreCompileFailures) {
  Solution missing = plugin_solution("nope", "any", "identity");
  missing.sources[0].content = "exec /nonexistent/binary \"$1\"\n";
  RunRequest r;
  EXPECT_EQ(engine_.execute_solution(missing, r, ExecMode::kIsolated, worker_).status,
            ExecStatus::kFailedCompile);
  Solution cuda = plugin_solution("cuda", "any", "identity");
  cuda.language = "cuda";
  EXPECT_EQ(engine_.execute_solution(cuda, r, ExecMode::kIsolated, worker_).status,
            ExecStatus::kFailedCompile);
}

TEST_F(EngineTest, TimingSingleRunEqualsItsSample) {
  const Solution s = plugin_solution("id", "any", "identity");
  RunRequest r;
  r.entry_point = "run.sh::identity";
  const TimingResult t = engine_.time_solution(s, r, ExecMode::kPersistent, worker_, {0, 1, 5s});
  ASSERT_EQ(t.exec.status, ExecStatus::kOk);
  ASSERT_EQ(t.samples_ms.size(), 1u);
  EXPECT_EQ(t.latency_ms, t.samples_ms[0]);
  const TimingResult many =
      engine_.time_solution(s, r, ExecMode::kPersistent, worker_, {2, 7, 5s});
  ASSERT_EQ(many.samples_ms.size(), 7u);
  double sum = 0;
  for (double x : many.samples_ms) sum += x;
  EXPECT_DOUBLE_EQ(many.latency_ms, sum / 7);
}

TEST_F(EngineTest, DoublingWorkRoughlyDoublesLatency) {
  RunRequest r;
  r.entry_point = "run.sh::busy";
  const TimingConfig tc{1, 5, 5s};
  const auto one = engine_.time_solution(
      plugin_solution("busy1", "any", "busy", {{"FIB_BUSY_US", "8000"}}), r,
      ExecMode::kPersistent, worker_, tc);
  const auto two = engine_.time_solution(
      plugin_solution("busy2", "any", "busy", {{"FIB_BUSY_US", "16000"}}), r,
      ExecMode::kPersistent, worker_, tc);
  ASSERT_EQ(one.exec.status, ExecStatus::kOk);
  const double ratio = two.latency_ms / one.latency_ms;
  EXPECT_GT(ratio, 2.0 * 0.7);
  EXPECT_LT(ratio, 2.0 * 1.3);
}

TEST_F(EngineTest, ConcurrentTimingOnOneWorkerSerializes) {
  RunRequest r;
  r.entry_point = "run.sh::busy";
  const Solution s = plugin_solution("busy", "any", "busy", {{"FIB_BUSY_US", "10000"}});
  const TimingConfig tc{0, 4, 5s};
  // Bootstrap outside the measured window.
  engine_.execute_solution(s, r, ExecMode::kPersistent, worker_);
  TimingResult a, b;
  const auto t0 = std::chrono::steady_clock::now();
  std::thread ta([&] { a = engine_.time_solution(s, r, ExecMode::kPersistent, worker_, tc); });
  std::thread tb([&] { b = engine_.time_solution(s, r, ExecMode::kPersistent, worker_, tc); });
  ta.join();
  tb.join();
  const double wall = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
  ASSERT_EQ(a.exec.status, ExecStatus::kOk);
  ASSERT_EQ(b.exec.status, ExecStatus::kOk);
  double sum = 0;
  for (double x : a.samples_ms) sum += x;
  for (double x : b.samples_ms) sum += x;
  EXPECT_GE(wall, sum);
}

TEST(WorkerLock, FifoGrantOrder) {
  TempDir tmp;
  Worker w(3, tmp.path());
  auto first = w.acquire();
  std::vector<std::thread> threads;
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&] { auto l = w.acquire(); });
    std::this_thread::sleep_for(20ms);  // enqueue in thread order
  }
  first.release();
  for (auto& t : threads) t.join();
  const auto order = w.grant_order();
  ASSERT_EQ(order.size(), 7u);
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
}

TEST(WorkerLock, VisibleToOtherOpenFileDescriptions) {
  TempDir tmp;
  Worker w(5, tmp.path());
  auto lock = w.acquire();
  const int fd = ::open((tmp.path() / "worker-5.lock").c_str(), O_RDWR);
  ASSERT_GE(fd, 0);
  EXPECT_NE(::flock(fd, LOCK_EX | LOCK_NB), 0);
  lock.release();
  EXPECT_EQ(::flock(fd, LOCK_EX | LOCK_NB), 0);
  ::flock(fd, LOCK_UN);
  ::close(fd);
}

TEST_F(EngineTest, CorrectGemmPassesWithConsistentSpeedup) {
  const Workload w = random_workload(gemm_, "w-pass", {{"M", 6}});
  for (ExecMode mode : {ExecMode::kIsolated, ExecMode::kPersistent}) {
    const Evaluation e = engine_.run_evaluation(gemm_, w, plugin_solution("good", gemm_.name, "gemm"),
                                                mode, worker_);
    ASSERT_EQ(e.status, EvalStatus::kPassed) << e.log;
    ASSERT_TRUE(e.performance && e.correctness);
    EXPECT_EQ(e.correctness->max_absolute_error, 0.0);
    EXPECT_GT(e.performance->latency_ms, 0.0);
    EXPECT_TRUE(std::isfinite(e.performance->speedup_factor));
    EXPECT_DOUBLE_EQ(e.performance->speedup_factor,
                     e.performance->reference_latency_ms / e.performance->latency_ms);
    EXPECT_EQ(e.environment.libs.at("test-plugin"), "1");
    EXPECT_EQ(e.environment.libs.at("fib"), Engine::harness_version());
    EXPECT_FALSE(e.environment.hardware.empty());
    EXPECT_EQ(e.timestamp.size(), 26u);
  }
}

TEST_F(EngineTest, ExampleGemmWorkloadReplays) {
  const Definition d = parse_definition_text(
      testing::read_file(testing::data_dir() / "examples" / "gemm_definition.json"));
  const TraceRecord t = parse_trace(
      testing::read_file(testing::data_dir() / "examples" / "gemm_workload.json"));
  const Evaluation e = engine_.run_evaluation(d, t.workload, plugin_solution("g", d.name, "gemm"),
                                              ExecMode::kPersistent, worker_);
  ASSERT_EQ(e.status, EvalStatus::kPassed) << e.log;
  EXPECT_TRUE(std::isfinite(e.performance->speedup_factor));
}

TEST_F(EngineTest, OffsetOutputFailsCorrectnessWithErrorTen) {
  const Workload w = random_workload(gemm_, "w-off", {{"M", 4}});
  const Evaluation e = engine_.run_evaluation(
      gemm_, w, plugin_solution("off", gemm_.name, "gemm_offset"), ExecMode::kPersistent, worker_);
  EXPECT_EQ(e.status, EvalStatus::kFailedCorrectness);
  ASSERT_TRUE(e.correctness);
  EXPECT_FALSE(e.performance);
  // |C + 10 - C| is 10 up to the f16 rounding of C + 10.
  EXPECT_NEAR(e.correctness->max_absolute_error, 10.0, 0.01);
}

TEST_F(EngineTest, StaleMemoryCannotPassInIsolatedMode) {
  const Workload w = random_workload(gemm_, "w-stale", {{"M", 5}});
  const Evaluation e = engine_.run_evaluation(
      gemm_, w, plugin_solution("stale", gemm_.name, "stale"), ExecMode::kIsolated, worker_);
  EXPECT_EQ(e.status, EvalStatus::kFailedCorrectness);
}

TEST_F(EngineTest, ReferenceOutputsNeverCrossTheWire) {
  engine_.clear_frame_log();
  const Workload w = random_workload(gemm_, "w-flow", {{"M", 3}});
  const Solution s = plugin_solution("good", gemm_.name, "gemm");
  ASSERT_EQ(engine_.run_evaluation(gemm_, w, s, ExecMode::kPersistent, worker_).status,
            EvalStatus::kPassed);
  uint64_t seed = 0;
  const TensorMap in = engine_.prepare_inputs(gemm_, w, &seed);
  const TensorMap ref = run_reference(gemm_, in, seed);
  const auto log = engine_.frame_log();
  ASSERT_FALSE(log.empty());
  for (const FrameRecord& f : log) {
    for (const auto& [name, digest] : f.tensors) {
      EXPECT_TRUE(name == "A" || name == "B") << name;
      EXPECT_NE(digest, tensor_digest(ref.at("C")));
    }
  }
}

TEST_F(EngineTest, StatefulPluginFailsOnlyWhenProcessesAreReused) {
  const Solution s = plugin_solution("stateful", gemm_.name, "stateful");
  const Workload w1 = random_workload(gemm_, "w-s1", {{"M", 2}});
  const Workload w2 = random_workload(gemm_, "w-s2", {{"M", 2}});
  EXPECT_EQ(engine_.evaluate(gemm_, w1, s, ExecMode::kIsolated, worker_).evaluation.status,
            EvalStatus::kPassed);
  EXPECT_EQ(engine_.evaluate(gemm_, w2, s, ExecMode::kIsolated, worker_).evaluation.status,
            EvalStatus::kPassed);
  EXPECT_EQ(engine_.evaluate(gemm_, w1, s, ExecMode::kPersistent, worker_).evaluation.status,
            EvalStatus::kPassed);
  const EvalOutcome o = engine_.evaluate(gemm_, w2, s, ExecMode::kPersistent, worker_);
  EXPECT_EQ(o.evaluation.status, EvalStatus::kFailedRuntime);
  EXPECT_TRUE(o.retryable);
}

TEST_F(EngineTest, SamplerPassesAndLeakyFailsOnMask) {
  const Definition d = load_definition("sampling_v8");
  const Workload w = random_workload(d, "w-samp", {{"batch_size", 2}});
  const Evaluation good = engine_.run_evaluation(
      d, w, plugin_solution("sampler", d.name, "sampler"), ExecMode::kPersistent, worker_);
  ASSERT_EQ(good.status, EvalStatus::kPassed) << good.log;
  EXPECT_LE(good.correctness->extra["tvd"].get<double>(), 0.02);
  const Evaluation leaky = engine_.run_evaluation(
      d, w, plugin_solution("leaky", d.name, "sampler_leaky"), ExecMode::kPersistent, worker_);
  EXPECT_EQ(leaky.status, EvalStatus::kFailedCorrectness);
  EXPECT_NE(leaky.log.find("mask violation"), std::string::npos) << leaky.log;
}

TEST_F(EngineTest, RmsnormPluginPasses) {
  const Definition d = load_definition("rmsnorm_h256");
  const Workload w = random_workload(d, "w-rms", {{"batch_size", 4}});
  const Evaluation e = engine_.run_evaluation(
      d, w, plugin_solution("rms", d.name, "rmsnorm"), ExecMode::kPersistent, worker_);
  EXPECT_EQ(e.status, EvalStatus::kPassed) << e.log;
}

TEST_F(EngineTest, HarnessSideFailuresBecomeRecords) {
  Definition d = gemm_;
  d.op_type = "moe_dispatch";
  const Workload w = random_workload(d, "w-unk", {{"M", 2}});
  const Evaluation e = engine_.run_evaluation(d, w, plugin_solution("g", d.name, "gemm"),
                                              ExecMode::kIsolated, worker_);
  EXPECT_EQ(e.status, EvalStatus::kFailedRuntime);
  EXPECT_NE(e.log.find("UnsupportedOpType"), std::string::npos) << e.log;
}

TEST_F(EngineTest, CompiledCppSolution) {
  Solution s;
  s.name = "cpp_gemm";
  s.definition = gemm_.name;
  s.author = "tester";
  s.language = "cpp";
  s.entry_point = "kernel.cc::run_gemm";
  s.sources = {{"kernel.cc",
                "#include \"fib/frame.h\"\n#include \"fib/reference.h\"\n"
                "fib::TensorMap run_gemm(const fib::RunRequest& r) {\n"
                "  fib::TensorMap out;\n"
                "  out.set(\"C\", fib::ref_gemm(r.inputs[0].second, r.inputs[1].second));\n"
                "  return out;\n}\n"}};
  const Workload w = random_workload(gemm_, "w-cpp", {{"M", 3}});
  const Evaluation e = engine_.run_evaluation(gemm_, w, s, ExecMode::kPersistent, worker_);
  EXPECT_EQ(e.status, EvalStatus::kPassed) << e.log;
  EXPECT_EQ(e.environment.libs.at("language"), "cpp");

  // A second engine over the same cache directory reuses the build.
  Engine again(config());
  EXPECT_TRUE(again.stage(s)->reused);

  Solution broken = s;
  broken.sources[0].content = "this is not C++\n";
  const Evaluation b = engine_.run_evaluation(gemm_, w, broken, ExecMode::kIsolated, worker_);
  EXPECT_EQ(b.status, EvalStatus::kFailedCompile);
  EXPECT_NE(b.log.find("build failed"), std::string::npos);
}

}  // namespace
}  // namespace fib
