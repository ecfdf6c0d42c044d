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

#ifndef FIB_METRICS_H_
#define FIB_METRICS_H_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fib/trace.h"

namespace fib {

// fraction of evaluations that PASSED with speedup strictly above p. Throws
// Error(kEmptyEvalSet) for an empty set.
double fast_p(std::span<const Evaluation> evals, double p);

// Exact 0 followed by 64 log-spaced thresholds from 0.01 to 4.
std::vector<double> standard_p_grid();

enum class AucRule {
  kStep,       // exact area under the fast_p step function
  kTrapezoid,  // trapezoid over the grid points
};

struct FastPPoint {
  double p = 0.0;
  double value = 0.0;
  bool operator==(const FastPPoint&) const = default;
};

struct FastPCurve {
  std::vector<FastPPoint> points;
  double auc = 0.0;  // over [grid.front(), grid.back()]
};

// Throws Error(kEmptyEvalSet) for an empty set and Error(kSchema) for a grid
// that is empty or not ascending.
FastPCurve fast_p_curve(std::span<const Evaluation> evals, const std::vector<double>& grid,
                        AucRule rule = AucRule::kStep);

struct LeaderboardRow {
  std::string author;
  std::string definition;
  int solutions = 0;
  int evaluations = 0;
  double correctness_rate = 0.0;
  std::vector<FastPPoint> curve;
  double auc = 0.0;
};

// One row per (author, definition): the pointwise mean of the curves of that
// author's solutions. Sorted by auc, then correctness rate, descending; ties
// by author then definition. Records whose solution cannot be resolved are
// attributed to "unknown".
std::vector<LeaderboardRow> aggregate_leaderboard(
    const std::vector<TraceRecord>& traces, const std::map<std::string, Solution>& solutions,
    const std::vector<double>& grid = standard_p_grid(), AucRule rule = AucRule::kStep);

std::string leaderboard_csv(const std::vector<LeaderboardRow>& rows);
nlohmann::ordered_json leaderboard_json(const std::vector<LeaderboardRow>& rows);
std::string curve_csv(const std::vector<FastPPoint>& curve);

}  // namespace fib

#endif  // FIB_METRICS_H_
