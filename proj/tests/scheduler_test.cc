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

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "fib/error.h"
#include "fib/scheduler.h"
#include "test_util.h"

namespace fib {
namespace {

using namespace std::chrono_literals;
using testing::load_definition;
using testing::plugin_solution;
using testing::random_workload;
using testing::TempDir;

// Exhaustive oracle: minimal cost and the lexicographically first matching
// attaining it.
std::pair<double, std::vector<int>> brute_force(std::size_t n, const std::vector<double>& a) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> arg;
  do {
    double c = 0;
    for (std::size_t r = 0; r < n; ++r) c += a[r * n + static_cast<std::size_t>(perm[r])];
    if (c < best - 1e-9) {
      best = c;
      arg = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best, arg};
}

TEST(Hungarian, DiagonalFavoured) {
  for (std::size_t n = 1; n <= 8; ++n) {
    std::vector<double> a(n * n, 10.0);
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
    const Assignment s = hungarian_assign(n, a);
    EXPECT_DOUBLE_EQ(s.cost, static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(s.row_to_col[i], static_cast<int>(i));
  }
}

TEST(Hungarian, TwoByTwo) {
  const Assignment s = hungarian_assign(2, {4, 1, 2, 3});
  EXPECT_EQ(s.row_to_col, (std::vector<int>{1, 0}));
  EXPECT_DOUBLE_EQ(s.cost, 3.0);
}

TEST(Hungarian, MatchesBruteForceOnRandomMatrices) {
  int mismatches = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    for (uint32_t seed = 0; seed < 100; ++seed) {
      std::mt19937 gen(seed * 7919 + static_cast<uint32_t>(n));
      std::uniform_real_distribution<double> u(0.0, 100.0);
      std::vector<double> a(n * n);
      for (double& x : a) x = u(gen);
      const Assignment s = hungarian_assign(n, a);
      const auto [cost, arg] = brute_force(n, a);
      if (std::abs(s.cost - cost) > 1e-9) ++mismatches;
    }
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(Hungarian, TiesResolveLexicographically) {
  // Small integer costs make many optimal matchings.
  for (std::size_t n = 2; n <= 6; ++n) {
    for (uint32_t seed = 0; seed < 100; ++seed) {
      std::mt19937 gen(seed + 1000 * static_cast<uint32_t>(n));
      std::uniform_int_distribution<int> u(0, 2);
      std::vector<double> a(n * n);
      for (double& x : a) x = u(gen);
      const Assignment s = hungarian_assign(n, a);
      const auto [cost, arg] = brute_force(n, a);
      EXPECT_DOUBLE_EQ(s.cost, cost);
      EXPECT_EQ(s.row_to_col, arg) << "n=" << n << " seed=" << seed;
    }
  }
  // All-equal: identity.
  const Assignment flat = hungarian_assign(4, std::vector<double>(16, 5.0));
  EXPECT_EQ(flat.row_to_col, (std::vector<int>{0, 1, 2, 3}));
}

TEST(Hungarian, RejectsMalformedInput) {
  EXPECT_THROW(hungarian_assign(2, {1, 2, 3}), Error);
  EXPECT_THROW(hungarian_assign(2, {1, -2, 3, 4}), Error);
  EXPECT_THROW(hungarian_assign(1, {std::nan("")}), Error);
}

TEST(Hungarian, LargerInstancesStayOptimal) {
  // Against a second solve on a row-permuted copy: the optimum is invariant.
  std::mt19937 gen(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n : {10u, 25u, 40u}) {
    std::vector<double> a(n * n);
    for (double& x : a) x = u(gen);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), gen);
    std::vector<double> b(n * n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) b[r * n + c] = a[order[r] * n + c];
    }
    EXPECT_NEAR(hungarian_assign(n, a).cost, hungarian_assign(n, b).cost, 1e-9);
  }
}

TEST(CostModelTest, EwmaArithmetic) {
  CostModel one(1.0, 5.0);
  EXPECT_DOUBLE_EQ(one.estimate("s", 0), 5.0);
  one.update("s", 0, 7.0);
  one.update("s", 0, 3.0);
  EXPECT_DOUBLE_EQ(one.estimate("s", 0), 3.0);

  CostModel cm(0.3);
  cm.update("s", 1, 10.0);  // first observation initializes
  EXPECT_DOUBLE_EQ(cm.estimate("s", 1), 10.0);
  cm.update("s", 1, 20.0);
  EXPECT_DOUBLE_EQ(cm.estimate("s", 1), 13.0);
  EXPECT_DOUBLE_EQ(cm.estimate("s", 2), cm.default_ms());

  for (int i = 0; i < 200; ++i) cm.update("s", 1, 4.0);
  EXPECT_NEAR(cm.estimate("s", 1), 4.0, 1e-12);

  EXPECT_THROW(CostModel(0.0), Error);
  EXPECT_THROW(CostModel(1.5), Error);
}

TEST(CostModelTest, EntriesStayPositiveAndFinite) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> mag(-320.0, 308.0);
  std::uniform_int_distribution<int> pick(0, 5);
  const double specials[] = {0.0, -1.0, std::nan(""), std::numeric_limits<double>::infinity(),
                             -std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::denorm_min()};
  CostModel cm(0.7);
  for (int i = 0; i < 5000; ++i) {
    const double obs = pick(gen) == 0 ? specials[pick(gen)] : std::pow(10.0, mag(gen));
    cm.update("s" + std::to_string(i % 3), i % 2, obs);
    for (const auto& [key, cost] : cm.entries()) {
      ASSERT_TRUE(cost > 0.0 && std::isfinite(cost)) << cost;
    }
  }
}

class SchedulerTest : public ::testing::Test {
 protected:
  SchedulerTest() {
    EngineConfig c;
    c.work_dir = tmp_.path() / "work";
    c.timing = {1, 2, 5000ms};
    engine_ = std::make_unique<Engine>(c);
    catalog_.definitions[gemm_.name] = gemm_;
  }
  Worker* add_worker(int id) {
    workers_.push_back(std::make_unique<Worker>(id, tmp_.path() / "locks"));
    return workers_.back().get();
  }
  void add_workloads(int count) {
    for (int i = 0; i < count; ++i) {
      Workload w = random_workload(gemm_, "wl-" + std::to_string(i), {{"M", 1 + i % 4}});
      uuids_.push_back(w.uuid);
      catalog_.workloads[w.uuid] = std::move(w);
    }
  }
  void add_solution(const Solution& s) { catalog_.solutions[s.name] = s; }
  Job job(const std::string& uuid, const std::string& solution) {
    Job j;
    j.definition = gemm_.name;
    j.workload = uuid;
    j.solution = solution;
    return j;
  }

  TempDir tmp_;
  std::unique_ptr<Engine> engine_;
  const Definition gemm_ = load_definition("gemm_n16_k32");
  JobCatalog catalog_;
  std::vector<std::unique_ptr<Worker>> workers_;
  std::vector<std::string> uuids_;
};

TEST_F(SchedulerTest, CostMatrixShapeAndDiscounts) {
  Worker* w0 = add_worker(0);
  Worker* w1 = add_worker(1);
  add_workloads(3);
  const Solution good = plugin_solution("good", gemm_.name, "gemm");
  add_solution(good);
  std::vector<Job> jobs = {job(uuids_[0], "good"), job(uuids_[1], "other"),
                           job(uuids_[2], "third")};
  const SchedulerConfig cfg;
  CostModel cm;

  CostMatrix m = build_cost_matrix(jobs, {w0, w1}, cm, cfg);
  ASSERT_EQ(m.n, 3u);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(m.at(r, 0), cm.default_ms());
    EXPECT_EQ(m.at(r, 1), cm.default_ms());
    EXPECT_EQ(m.at(r, 2), kSentinelCost);
  }
  EXPECT_THROW(build_cost_matrix({}, {w0}, cm, cfg), Error);

  // Warm w1 for "good": row 0 gets a strictly smallest entry there.
  ASSERT_EQ(engine_->run_evaluation(gemm_, catalog_.workloads[uuids_[0]], good,
                                    ExecMode::kPersistent, *w1).status,
            EvalStatus::kPassed);
  m = build_cost_matrix(jobs, {w0, w1}, cm, cfg);
  // The evaluation also left the gemm reference resident on w1.
  EXPECT_DOUBLE_EQ(m.at(0, 1), cm.default_ms() * cfg.gamma_cache * cfg.gamma_ref);
  EXPECT_DOUBLE_EQ(m.at(1, 1), cm.default_ms() * cfg.gamma_ref);
  EXPECT_LT(m.at(0, 1), m.at(0, 0));
  EXPECT_LT(m.at(0, 1), m.at(1, 1));
}

TEST_F(SchedulerTest, PaddingNeverAssignsRealWork) {
  CostMatrix m;
  m.n = 3;
  m.real_rows = 3;
  m.real_cols = 2;
  m.cells = {5, 1, kSentinelCost, 1, 5, kSentinelCost, 2, 2, kSentinelCost};
  const Assignment a = hungarian_assign(m);
  EXPECT_EQ(a.row_to_col, (std::vector<int>{1, 0, 2}));
  EXPECT_DOUBLE_EQ(a.cost, 2 + kSentinelCost);
}

TEST_F(SchedulerTest, SingleJobSingleRecord) {
  Worker* w = add_worker(0);
  add_workloads(1);
  add_solution(plugin_solution("good", gemm_.name, "gemm"));
  CostModel cm;
  const ScheduleReport r = schedule_loop({job(uuids_[0], "good")}, catalog_, {w}, {}, *engine_,
                                         cm, SchedulerConfig{});
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].evaluation->status, EvalStatus::kPassed);
  EXPECT_EQ(r.records[0].workload.uuid, uuids_[0]);
  EXPECT_EQ(r.records[0].solution, "good");
  EXPECT_TRUE(cm.seen("good", 0));
}

TEST_F(SchedulerTest, FaultsAndDeferralStillYieldOneRecordPerJob) {
  std::vector<Worker*> ws = {add_worker(0), add_worker(1), add_worker(2)};
  add_workloads(10);
  for (const char* name : {"good_a", "good_b", "good_c"}) {
    add_solution(plugin_solution(name, gemm_.name, "gemm"));
  }
  // Sized to the timing window (1 warmup + 2 runs): isolated survives.
  add_solution(plugin_solution("fragile", gemm_.name, "fragile", {{"FIB_FRAGILE_RUNS", "3"}}));
  std::vector<Job> jobs;
  for (const std::string& u : uuids_) {
    for (const char* s : {"good_a", "good_b", "good_c", "fragile"}) jobs.push_back(job(u, s));
  }
  ASSERT_EQ(jobs.size(), 40u);
  const std::vector<InjectedFault> faults = {{1, 0}, {2, 1}, {3, 2}};
  CostModel cm;
  std::vector<std::size_t> finished;
  const ScheduleReport r =
      schedule_loop(jobs, catalog_, ws, {}, *engine_, cm, SchedulerConfig{}, faults,
                    [&](std::size_t j, const TraceRecord&) { finished.push_back(j); });

  ASSERT_EQ(r.records.size(), 40u);
  std::set<std::size_t> unique(finished.begin(), finished.end());
  EXPECT_EQ(unique.size(), 40u);
  for (const TraceRecord& t : r.records) {
    EXPECT_EQ(t.evaluation->status, EvalStatus::kPassed) << *t.solution << " "
                                                         << t.evaluation->log;
  }
  // Each injected kill hit the intended worker.
  for (const InjectedFault& f : faults) {
    bool hit = false;
    for (const Attempt& a : r.attempts) {
      hit |= a.round == f.round && a.worker == f.worker && a.retryable;
    }
    EXPECT_TRUE(hit) << "round " << f.round;
  }
  // Every fragile job: two persistent failures, then an isolated pass.
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    std::vector<Attempt> mine;
    for (const Attempt& a : r.attempts) {
      if (a.job == j) mine.push_back(a);
    }
    ASSERT_FALSE(mine.empty());
    EXPECT_LE(mine.size(), 4u);
    EXPECT_TRUE(mine.back().final);
    if (jobs[j].solution != "fragile") continue;
    int persistent_failures = 0;
    for (const Attempt& a : mine) {
      if (a.mode == ExecMode::kPersistent) {
        EXPECT_NE(a.status, EvalStatus::kPassed);
        ++persistent_failures;
      }
    }
    EXPECT_EQ(persistent_failures, 2);
    EXPECT_EQ(mine.back().mode, ExecMode::kIsolated);
  }
  EXPECT_GE(r.respawns, 3);
}

TEST_F(SchedulerTest, StallsWhenNoWorkerSurvives) {
  Worker* w = add_worker(0);
  add_workloads(2);
  add_solution(plugin_solution("good", gemm_.name, "gemm"));
  SchedulerConfig cfg;
  cfg.max_respawns = 0;
  CostModel cm;
  try {
    schedule_loop({job(uuids_[0], "good"), job(uuids_[1], "good")}, catalog_, {w}, {}, *engine_,
                  cm, cfg, {{0, 0}});
    FAIL() << "expected a stall";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchedulerStalled);
  }
}

TEST_F(SchedulerTest, SpareReplacesDeadWorker) {
  Worker* w = add_worker(0);
  Worker* spare = add_worker(7);
  add_workloads(3);
  add_solution(plugin_solution("good", gemm_.name, "gemm"));
  SchedulerConfig cfg;
  cfg.max_respawns = 0;
  CostModel cm;
  const ScheduleReport r =
      schedule_loop({job(uuids_[0], "good"), job(uuids_[1], "good"), job(uuids_[2], "good")},
                    catalog_, {w}, {spare}, *engine_, cm, cfg, {{0, 0}});
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.attempts.front().worker, 0);
  EXPECT_EQ(r.attempts.back().worker, 7);
}

TEST_F(SchedulerTest, UnknownSolutionBecomesRecord) {
  Worker* w = add_worker(0);
  add_workloads(1);
  CostModel cm;
  const ScheduleReport r = schedule_loop({job(uuids_[0], "ghost")}, catalog_, {w}, {}, *engine_,
                                         cm, SchedulerConfig{});
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].evaluation->status, EvalStatus::kFailedRuntime);
  EXPECT_TRUE(r.attempts.empty());
}

TEST_F(SchedulerTest, DeterministicGivenInputs) {
  // Failing jobs never update the cost model, so assignments depend only on
  // the inputs and on residency.
  add_workloads(6);
  add_solution(plugin_solution("raise_a", gemm_.name, "raise"));
  add_solution(plugin_solution("raise_b", gemm_.name, "raise"));
  std::vector<Job> jobs;
  for (const std::string& u : uuids_) {
    jobs.push_back(job(u, "raise_a"));
    jobs.push_back(job(u, "raise_b"));
  }
  auto trace = [&](int base) {
    std::vector<Worker*> ws = {add_worker(base), add_worker(base + 1), add_worker(base + 2)};
    CostModel cm;
    const ScheduleReport r = schedule_loop(jobs, catalog_, ws, {}, *engine_, cm,
                                           SchedulerConfig{}, {{1, base + 1}});
    std::vector<std::tuple<int, std::size_t, int, bool>> out;
    for (const Attempt& a : r.attempts) out.emplace_back(a.round, a.job, a.worker - base, a.final);
    return out;
  };
  EXPECT_EQ(trace(10), trace(20));
}

}  // namespace
}  // namespace fib
