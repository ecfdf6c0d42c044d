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

#include "fib/metrics.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <tuple>

#include "fib/error.h"

namespace fib {
namespace {

bool counts_at(const Evaluation& e, double p) {
  return e.status == EvalStatus::kPassed && e.performance && e.performance->speedup_factor > p;
}

void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw Error(ErrorCode::kSchema, "empty p grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i]) || grid[i] < 0.0 || (i > 0 && grid[i] <= grid[i - 1])) {
      throw Error(ErrorCode::kSchema, "p grid must be finite, non-negative and ascending");
    }
  }
}

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

}  // namespace

double fast_p(std::span<const Evaluation> evals, double p) {
  if (evals.empty()) throw Error(ErrorCode::kEmptyEvalSet, "fast_p over an empty set");
  std::size_t hits = 0;
  for (const Evaluation& e : evals) hits += counts_at(e, p) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(evals.size());
}

std::vector<double> standard_p_grid() {
  constexpr int kPoints = 64;
  const double lo = std::log(0.01), hi = std::log(4.0);
  std::vector<double> grid = {0.0};
  for (int i = 0; i < kPoints; ++i) {
    grid.push_back(i == kPoints - 1 ? 4.0 : std::exp(lo + (hi - lo) * i / (kPoints - 1)));
  }
  grid[1] = 0.01;
  return grid;
}

FastPCurve fast_p_curve(std::span<const Evaluation> evals, const std::vector<double>& grid,
                        AucRule rule) {
  if (evals.empty()) throw Error(ErrorCode::kEmptyEvalSet, "fast_p curve over an empty set");
  check_grid(grid);
  FastPCurve curve;
  for (double p : grid) curve.points.push_back({p, fast_p(evals, p)});
  const double a = grid.front(), b = grid.back();
  if (rule == AucRule::kStep) {
    // Each passing record contributes the part of [a, b] lying below its speedup.
    double area = 0.0;
    for (const Evaluation& e : evals) {
      if (!counts_at(e, a)) continue;
      area += std::min(e.performance->speedup_factor, b) - a;
    }
    curve.auc = area / static_cast<double>(evals.size());
  } else {
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
      curve.auc += 0.5 * (curve.points[i].value + curve.points[i - 1].value) *
                   (curve.points[i].p - curve.points[i - 1].p);
    }
  }
  return curve;
}

std::vector<LeaderboardRow> aggregate_leaderboard(const std::vector<TraceRecord>& traces,
                                                  const std::map<std::string, Solution>& solutions,
                                                  const std::vector<double>& grid, AucRule rule) {
  check_grid(grid);
  struct SolutionKey {
    std::string author, definition, solution;
    auto operator<=>(const SolutionKey&) const = default;
  };
  std::map<SolutionKey, std::vector<Evaluation>> by_solution;
  for (const TraceRecord& t : traces) {
    if (!t.evaluation) continue;
    std::string name, author = "unknown";
    if (t.inline_solution) {
      name = t.inline_solution->name;
      author = t.inline_solution->author;
    } else if (t.solution) {
      name = *t.solution;
      if (auto it = solutions.find(name); it != solutions.end()) author = it->second.author;
    }
    by_solution[{author, t.definition, name}].push_back(*t.evaluation);
  }

  std::map<std::pair<std::string, std::string>, LeaderboardRow> rows;
  for (const auto& [key, evals] : by_solution) {
    const FastPCurve c = fast_p_curve(evals, grid, rule);
    LeaderboardRow& row = rows[{key.author, key.definition}];
    if (row.curve.empty()) {
      row.author = key.author;
      row.definition = key.definition;
      for (double p : grid) row.curve.push_back({p, 0.0});
    }
    ++row.solutions;
    row.evaluations += static_cast<int>(evals.size());
    for (std::size_t i = 0; i < c.points.size(); ++i) row.curve[i].value += c.points[i].value;
    row.auc += c.auc;
    row.correctness_rate += fast_p(evals, 0.0);
  }
  std::vector<LeaderboardRow> out;
  for (auto& [key, row] : rows) {
    const double n = row.solutions;
    for (FastPPoint& pt : row.curve) pt.value /= n;
    row.auc /= n;
    row.correctness_rate /= n;
    out.push_back(std::move(row));
  }
  std::stable_sort(out.begin(), out.end(), [](const LeaderboardRow& x, const LeaderboardRow& y) {
    return std::tie(y.auc, y.correctness_rate, x.author, x.definition) <
           std::tie(x.auc, x.correctness_rate, y.author, y.definition);
  });
  return out;
}

std::string leaderboard_csv(const std::vector<LeaderboardRow>& rows) {
  std::ostringstream os;
  os << "author,definition,solutions,evaluations,correctness_rate,auc";
  if (!rows.empty()) {
    for (const FastPPoint& pt : rows.front().curve) os << ",fast_" << format_number(pt.p);
  }
  os << "\n";
  auto quote = [](const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
      if (c == '"') q += '"';
      q += c;
    }
    return q + "\"";
  };
  for (const LeaderboardRow& r : rows) {
    os << quote(r.author) << "," << quote(r.definition) << "," << r.solutions << ","
       << r.evaluations << "," << format_number(r.correctness_rate) << ","
       << format_number(r.auc);
    for (const FastPPoint& pt : r.curve) os << "," << format_number(pt.value);
    os << "\n";
  }
  return os.str();
}

nlohmann::ordered_json leaderboard_json(const std::vector<LeaderboardRow>& rows) {
  nlohmann::ordered_json doc;
  doc["leaderboard"] = nlohmann::ordered_json::array();
  for (const LeaderboardRow& r : rows) {
    nlohmann::ordered_json row;
    row["author"] = r.author;
    row["definition"] = r.definition;
    row["solutions"] = r.solutions;
    row["evaluations"] = r.evaluations;
    row["correctness_rate"] = r.correctness_rate;
    row["auc"] = r.auc;
    auto& curve = row["fast_p"] = nlohmann::ordered_json::array();
    for (const FastPPoint& pt : r.curve) curve.push_back({pt.p, pt.value});
    doc["leaderboard"].push_back(std::move(row));
  }
  return doc;
}

std::string curve_csv(const std::vector<FastPPoint>& curve) {
  std::string out = "p,fast_p\n";
  for (const FastPPoint& pt : curve) {
    out += format_number(pt.p) + "," + format_number(pt.value) + "\n";
  }
  return out;
}

}  // namespace fib
