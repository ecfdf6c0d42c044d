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
#include <random>

#include <gtest/gtest.h>

#include "fib/error.h"
#include "fib/metrics.h"

namespace fib {
namespace {

Evaluation passed(double speedup) {
  Evaluation e;
  e.status = EvalStatus::kPassed;
  e.performance = Performance{1.0, speedup, speedup};
  return e;
}

Evaluation failed(EvalStatus s = EvalStatus::kFailedCorrectness) {
  Evaluation e;
  e.status = s;
  return e;
}

TraceRecord record(const std::string& def, const std::string& sol, const std::string& uuid,
                   Evaluation e) {
  TraceRecord t;
  t.definition = def;
  t.workload.uuid = uuid;
  t.solution = sol;
  t.evaluation = std::move(e);
  return t;
}

Solution solution(const std::string& name, const std::string& author) {
  Solution s;
  s.name = name;
  s.author = author;
  return s;
}

TEST(FastP, Counts) {
  const std::vector<Evaluation> twos(5, passed(2.0));
  EXPECT_EQ(fast_p(twos, 1.0), 1.0);
  EXPECT_EQ(fast_p(twos, 2.0), 0.0);  // strictly faster than p
  const std::vector<Evaluation> mixed = {passed(1.5), passed(0.8), failed()};
  EXPECT_DOUBLE_EQ(fast_p(mixed, 1.0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(fast_p(mixed, 0.0), 2.0 / 3.0);
  EXPECT_THROW(fast_p(std::vector<Evaluation>{}, 1.0), Error);
  try {
    fast_p(std::vector<Evaluation>{}, 0.0);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyEvalSet);
  }
}

TEST(FastP, ZeroIsCorrectnessRateExactly) {
  std::mt19937 gen(11);
  std::uniform_int_distribution<int> status(0, 4);
  std::lognormal_distribution<double> speed(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Evaluation> evals;
    const int n = 1 + trial % 37;
    int passes = 0;
    for (int i = 0; i < n; ++i) {
      const int s = status(gen);
      if (s == 0) {
        evals.push_back(passed(speed(gen)));
        ++passes;
      } else {
        evals.push_back(failed(static_cast<EvalStatus>(s)));
      }
    }
    EXPECT_EQ(fast_p(evals, 0.0), static_cast<double>(passes) / n);
  }
}

TEST(FastPCurveTest, StandardGrid) {
  const std::vector<double> g = standard_p_grid();
  ASSERT_EQ(g.size(), 65u);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 0.01);
  EXPECT_EQ(g.back(), 4.0);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
  // Log spacing: constant ratio between neighbours.
  EXPECT_NEAR(g[2] / g[1], g[64] / g[63], 1e-12);
}

TEST(FastPCurveTest, AllFailedIsFlatZero) {
  const std::vector<Evaluation> evals(4, failed());
  const FastPCurve c = fast_p_curve(evals, standard_p_grid());
  for (const FastPPoint& pt : c.points) EXPECT_EQ(pt.value, 0.0);
  EXPECT_EQ(c.auc, 0.0);
}

TEST(FastPCurveTest, SinglePassIsAStepAtItsSpeedup) {
  const std::vector<Evaluation> evals = {passed(2.0)};
  const FastPCurve c = fast_p_curve(evals, {0, 1, 1.5, 2, 2.5, 4});
  const std::vector<double> expect = {1, 1, 1, 0, 0, 0};
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_EQ(c.points[i].value, expect[i]);
}

TEST(FastPCurveTest, StepAreaMatchesAnalyticValue) {
  const std::vector<Evaluation> evals(10, passed(2.0));
  // Area of 1 on [0, 2) and 0 on [2, 4].
  EXPECT_NEAR(fast_p_curve(evals, standard_p_grid()).auc, 2.0, 1e-9);
  // Speedups beyond the grid are clipped at its end; mixed sets average.
  const std::vector<Evaluation> mixed = {passed(0.5), passed(9.0), failed(), passed(3.0)};
  EXPECT_NEAR(fast_p_curve(mixed, {0, 4}).auc, (0.5 + 4.0 + 3.0) / 4, 1e-12);
  // On a grid starting above 0 only the part of each speedup above it counts.
  EXPECT_NEAR(fast_p_curve(mixed, {1, 4}).auc, (3.0 + 2.0) / 4, 1e-12);
  // The trapezoid rule on a coarse grid does not see the step exactly.
  const double trap = fast_p_curve(evals, {0, 1.5, 2.5, 4}, AucRule::kTrapezoid).auc;
  EXPECT_DOUBLE_EQ(trap, 1.5 + 0.5 * 1.0);
}

TEST(FastPCurveTest, NonIncreasingOnRandomSets) {
  std::mt19937 gen(5);
  std::lognormal_distribution<double> speed(0.0, 0.8);
  std::bernoulli_distribution ok(0.7);
  const std::vector<double> grid = standard_p_grid();
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Evaluation> evals;
    for (int i = 0; i < 1 + trial % 23; ++i) evals.push_back(ok(gen) ? passed(speed(gen)) : failed());
    const FastPCurve c = fast_p_curve(evals, grid);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      ASSERT_LE(c.points[i].value, c.points[i - 1].value);
    }
    EXPECT_GE(c.auc, 0.0);
    EXPECT_LE(c.auc, grid.back() - grid.front());
  }
}

TEST(FastPCurveTest, RejectsBadGrids) {
  const std::vector<Evaluation> evals = {passed(1.0)};
  EXPECT_THROW(fast_p_curve(evals, {}), Error);
  EXPECT_THROW(fast_p_curve(evals, {1, 0.5}), Error);
  EXPECT_THROW(fast_p_curve(evals, {0, 0}), Error);
  EXPECT_THROW(fast_p_curve(std::vector<Evaluation>{}, {0, 1}), Error);
}

TEST(Leaderboard, SingleSolutionMirrorsItsCurve) {
  const std::vector<TraceRecord> traces = {record("gemm", "s1", "a", passed(2.0)),
                                           record("gemm", "s1", "b", failed())};
  const std::map<std::string, Solution> sols = {{"s1", solution("s1", "alice")}};
  const auto rows = aggregate_leaderboard(traces, sols);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].author, "alice");
  EXPECT_EQ(rows[0].solutions, 1);
  EXPECT_EQ(rows[0].evaluations, 2);
  EXPECT_DOUBLE_EQ(rows[0].correctness_rate, 0.5);
  const std::vector<Evaluation> evals = {passed(2.0), failed()};
  const FastPCurve c = fast_p_curve(evals, standard_p_grid());
  EXPECT_EQ(rows[0].curve, c.points);
  EXPECT_DOUBLE_EQ(rows[0].auc, c.auc);
}

TEST(Leaderboard, AveragesSolutionsPointwise) {
  const std::vector<double> grid = {0, 1, 2, 3};
  const std::vector<TraceRecord> traces = {record("gemm", "s1", "a", passed(1.5)),
                                           record("gemm", "s2", "a", passed(2.5)),
                                           record("gemm", "s2", "b", failed())};
  const std::map<std::string, Solution> sols = {{"s1", solution("s1", "bob")},
                                                {"s2", solution("s2", "bob")}};
  const auto rows = aggregate_leaderboard(traces, sols, grid);
  ASSERT_EQ(rows.size(), 1u);
  // s1: {1,1,0,0}; s2: {0.5,0.5,0.5,0}.
  const std::vector<double> expect = {0.75, 0.75, 0.25, 0.0};
  for (std::size_t i = 0; i < grid.size(); ++i) EXPECT_DOUBLE_EQ(rows[0].curve[i].value, expect[i]);
  EXPECT_DOUBLE_EQ(rows[0].correctness_rate, 0.75);
  EXPECT_DOUBLE_EQ(rows[0].auc, (1.5 + 2.5 / 2) / 2);
}

TEST(Leaderboard, SortedAndPermutationInvariant) {
  std::vector<TraceRecord> traces = {
      record("gemm", "slow", "a", passed(0.9)), record("gemm", "fast", "a", passed(3.0)),
      record("gemm", "slow", "b", passed(1.1)), record("gemm", "fast", "b", failed()),
      record("rms", "slow", "c", passed(2.0)),  record("gemm", "ghost", "a", passed(1.0))};
  const std::map<std::string, Solution> sols = {{"slow", solution("slow", "carol")},
                                                {"fast", solution("fast", "dave")}};
  const auto rows = aggregate_leaderboard(traces, sols);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_GE(rows[i - 1].auc, rows[i].auc);
  EXPECT_EQ(rows[0].definition, "rms");
  EXPECT_EQ(rows.back().author, "unknown");
  std::mt19937 gen(1);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(traces.begin(), traces.end(), gen);
    const auto again = aggregate_leaderboard(traces, sols);
    ASSERT_EQ(again.size(), rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      EXPECT_EQ(again[r].author, rows[r].author);
      EXPECT_EQ(again[r].definition, rows[r].definition);
      EXPECT_EQ(again[r].curve, rows[r].curve);
      EXPECT_DOUBLE_EQ(again[r].auc, rows[r].auc);
    }
  }
}

TEST(Leaderboard, EmptyDatasetGivesNoRows) {
  EXPECT_TRUE(aggregate_leaderboard({}, {}).empty());
  TraceRecord workload_only;
  workload_only.definition = "gemm";
  EXPECT_TRUE(aggregate_leaderboard({workload_only}, {}).empty());
  EXPECT_EQ(leaderboard_csv({}), "author,definition,solutions,evaluations,correctness_rate,auc\n");
}

TEST(Leaderboard, CsvAndJsonEmission) {
  const std::vector<TraceRecord> traces = {record("gemm", "s", "a", passed(2.0))};
  const std::map<std::string, Solution> sols = {{"s", solution("s", "erin, jr")}};
  const auto rows = aggregate_leaderboard(traces, sols, {0, 1, 4});
  const std::string csv = leaderboard_csv(rows);
  EXPECT_EQ(csv,
            "author,definition,solutions,evaluations,correctness_rate,auc,fast_0,fast_1,fast_4\n"
            "\"erin, jr\",gemm,1,1,1,2,1,1,0\n");
  const auto doc = leaderboard_json(rows);
  EXPECT_EQ(doc["leaderboard"][0]["auc"], 2.0);
  EXPECT_EQ(doc["leaderboard"][0]["fast_p"].size(), 3u);
  EXPECT_EQ(curve_csv(rows[0].curve), "p,fast_p\n0,1\n1,1\n4,0\n");
}

}  // namespace
}  // namespace fib
