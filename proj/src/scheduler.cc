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

#include "fib/scheduler.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <thread>

#include "fib/error.h"

namespace fib {
namespace {

// O(n^3) shortest augmenting path with potentials. Returns row -> column.
std::vector<int> solve_square(std::size_t n, const std::vector<double>& a) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
  return row_to_col;
}

double matching_cost(std::size_t n, const std::vector<double>& a, const std::vector<int>& m) {
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) total += a[r * n + static_cast<std::size_t>(m[r])];
  return total;
}

// Past this size the O(n^5) tie-break is skipped; any optimum is returned.
constexpr std::size_t kTieBreakLimit = 32;

std::vector<int> lexicographic_optimum(std::size_t n, const std::vector<double>& a) {
  std::vector<int> best = solve_square(n, a);
  if (n <= 1 || n > kTieBreakLimit) return best;
  const double opt = matching_cost(n, a, best);
  double scale = 1.0;
  for (double x : a) scale = std::max(scale, std::abs(x));
  const double eps = 1e-12 * scale * static_cast<double>(n);

  // Fix rows in order to the smallest column that still admits an optimum.
  std::vector<int> fixed(n, -1);
  std::vector<char> col_used(n, 0);
  double fixed_cost = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (col_used[c]) continue;
      if (static_cast<int>(c) == best[r]) {
        // The current optimum already uses this cell.
        fixed[r] = static_cast<int>(c);
        break;
      }
      std::vector<std::size_t> rows, cols;
      for (std::size_t rr = r + 1; rr < n; ++rr) rows.push_back(rr);
      for (std::size_t cc = 0; cc < n; ++cc) {
        if (!col_used[cc] && cc != c) cols.push_back(cc);
      }
      const std::size_t k = rows.size();
      std::vector<double> sub(k * k);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) sub[i * k + j] = a[rows[i] * n + cols[j]];
      }
      const std::vector<int> rest = k ? solve_square(k, sub) : std::vector<int>{};
      const double total = fixed_cost + a[r * n + c] + (k ? matching_cost(k, sub, rest) : 0.0);
      if (total <= opt + eps) {
        fixed[r] = static_cast<int>(c);
        for (std::size_t i = 0; i < k; ++i) {
          best[rows[i]] = static_cast<int>(cols[static_cast<std::size_t>(rest[i])]);
        }
        best[r] = static_cast<int>(c);
        break;
      }
    }
    col_used[static_cast<std::size_t>(fixed[r])] = 1;
    fixed_cost += a[r * n + static_cast<std::size_t>(fixed[r])];
  }
  return fixed;
}

void check_matrix(std::size_t n, const std::vector<double>& cells) {
  if (cells.size() != n * n) {
    throw Error(ErrorCode::kSchema, "cost matrix is not square");
  }
  for (double x : cells) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw Error(ErrorCode::kSchema, "cost matrix entries must be finite and non-negative");
    }
  }
}

}  // namespace

Assignment hungarian_assign(std::size_t n, const std::vector<double>& cells) {
  check_matrix(n, cells);
  Assignment out;
  out.row_to_col = lexicographic_optimum(n, cells);
  out.cost = matching_cost(n, cells, out.row_to_col);
  return out;
}

Assignment hungarian_assign(const CostMatrix& m) {
  check_matrix(m.n, m.cells);
  // Every perfect matching uses the same number of padded cells, so zeroing
  // them keeps the optimum and spares the solver from 1e12-sized sums.
  std::vector<double> cells = m.cells;
  for (std::size_t r = 0; r < m.n; ++r) {
    for (std::size_t c = 0; c < m.n; ++c) {
      if (r >= m.real_rows || c >= m.real_cols) cells[r * m.n + c] = 0.0;
    }
  }
  Assignment out;
  out.row_to_col = lexicographic_optimum(m.n, cells);
  out.cost = matching_cost(m.n, m.cells, out.row_to_col);
  return out;
}

CostModel::CostModel(double alpha, double default_ms) : alpha_(alpha), default_ms_(default_ms) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorCode::kSchema, "EWMA alpha must be in (0, 1]");
  }
  if (!(default_ms > 0.0) || !std::isfinite(default_ms)) {
    throw Error(ErrorCode::kSchema, "default cost must be positive and finite");
  }
}

double CostModel::estimate(const std::string& solution, int worker) const {
  auto it = costs_.find({solution, worker});
  return it == costs_.end() ? default_ms_ : it->second;
}

bool CostModel::seen(const std::string& solution, int worker) const {
  return costs_.count({solution, worker}) != 0;
}

void CostModel::update(const std::string& solution, int worker, double observed_ms) {
  if (!(observed_ms > 0.0) || !std::isfinite(observed_ms)) return;
  auto [it, inserted] = costs_.try_emplace({solution, worker}, observed_ms);
  if (!inserted) it->second = alpha_ * observed_ms + (1.0 - alpha_) * it->second;
  // Underflow toward zero is the only way out of (0, inf) here.
  if (!(it->second > 0.0)) it->second = std::numeric_limits<double>::min();
}

CostMatrix build_cost_matrix(const std::vector<Job>& jobs, const std::vector<Worker*>& workers,
                             const CostModel& cm, const SchedulerConfig& cfg) {
  if (jobs.empty() || workers.empty()) {
    throw Error(ErrorCode::kSchema, "cost matrix needs at least one job and one worker");
  }
  CostMatrix m;
  m.real_rows = jobs.size();
  m.real_cols = workers.size();
  m.n = std::max(jobs.size(), workers.size());
  m.cells.assign(m.n * m.n, kSentinelCost);
  for (std::size_t c = 0; c < workers.size(); ++c) {
    const std::set<std::string> warm = workers[c]->warm_solutions();
    const std::set<std::string> resident = workers[c]->resident_definitions();
    for (std::size_t r = 0; r < jobs.size(); ++r) {
      double cost = cm.estimate(jobs[r].solution, workers[c]->id());
      if (warm.count(jobs[r].solution)) cost *= cfg.gamma_cache;
      if (resident.count(jobs[r].definition)) cost *= cfg.gamma_ref;
      m.at(r, c) = cost;
    }
  }
  return m;
}

namespace {

struct Dispatch {
  std::size_t job = 0;
  Worker* worker = nullptr;
  ExecMode mode = ExecMode::kPersistent;
  EvalOutcome outcome;
};

TraceRecord record_for(const Job& job, const JobCatalog& catalog, Evaluation e) {
  TraceRecord t;
  t.definition = job.definition;
  t.workload = catalog.workloads.at(job.workload);
  t.solution = job.solution;
  t.evaluation = std::move(e);
  return t;
}

Evaluation harness_failure(const std::string& what) {
  Evaluation e;
  e.status = EvalStatus::kFailedRuntime;
  e.timestamp = now_timestamp();
  e.log = "harness: " + what;
  return e;
}

}  // namespace

ScheduleReport schedule_loop(std::vector<Job> jobs, const JobCatalog& catalog,
                             std::vector<Worker*> workers, std::vector<Worker*> spares,
                             Engine& engine, CostModel& cm, const SchedulerConfig& cfg,
                             const std::vector<InjectedFault>& faults, const RecordSink& sink) {
  ScheduleReport report;
  std::deque<std::size_t> pending;
  for (std::size_t i = 0; i < jobs.size(); ++i) pending.push_back(i);
  std::map<int, int> respawned;  // worker id -> times respawned
  std::deque<Worker*> spare_pool(spares.begin(), spares.end());
  for (Worker* w : workers) w->prewarm();

  auto emit = [&](std::size_t j, Evaluation e) {
    report.records.push_back(record_for(jobs[j], catalog, std::move(e)));
    if (sink) sink(j, report.records.back());
  };

  // Jobs whose names do not resolve never reach a worker.
  for (auto it = pending.begin(); it != pending.end();) {
    const Job& job = jobs[*it];
    std::string missing;
    if (!catalog.definitions.count(job.definition)) missing = "definition " + job.definition;
    if (!catalog.workloads.count(job.workload)) missing = "workload " + job.workload;
    if (!catalog.solutions.count(job.solution)) missing = "solution " + job.solution;
    if (missing.empty()) {
      ++it;
      continue;
    }
    if (!catalog.workloads.count(job.workload)) {
      throw Error(ErrorCode::kSchema, "job refers to unknown " + missing);
    }
    emit(*it, harness_failure("UnboundName: unknown " + missing));
    it = pending.erase(it);
  }

  int round = 0;
  while (!pending.empty()) {
    std::vector<Worker*> live;
    for (Worker* w : workers) {
      if (w->state() != WorkerState::kDead) live.push_back(w);
    }
    if (live.empty()) {
      throw Error(ErrorCode::kSchedulerStalled,
                  "no live workers with " + std::to_string(pending.size()) + " jobs pending");
    }
    const std::size_t batch_size =
        std::min(pending.size(), cfg.batch_size ? cfg.batch_size : live.size());
    std::vector<std::size_t> batch(pending.begin(), pending.begin() + batch_size);
    std::vector<Job> batch_jobs;
    for (std::size_t j : batch) batch_jobs.push_back(jobs[j]);

    const CostMatrix matrix = build_cost_matrix(batch_jobs, live, cm, cfg);
    const Assignment assignment = hungarian_assign(matrix);

    for (const InjectedFault& f : faults) {
      if (f.round != round) continue;
      for (Worker* w : live) {
        if (w->id() == f.worker) w->arm_kill();
      }
    }

    std::vector<Dispatch> dispatches;
    for (std::size_t r = 0; r < batch.size(); ++r) {
      const auto c = static_cast<std::size_t>(assignment.row_to_col[r]);
      if (c >= live.size()) continue;  // padded column: waits for a later round
      const Job& job = jobs[batch[r]];
      Dispatch d;
      d.job = batch[r];
      d.worker = live[c];
      d.mode = job.mode_override.value_or(cfg.mode);
      dispatches.push_back(std::move(d));
    }

    std::vector<std::thread> threads;
    threads.reserve(dispatches.size());
    for (Dispatch& d : dispatches) {
      threads.emplace_back([&d, &jobs, &catalog, &engine] {
        const Job& job = jobs[d.job];
        d.outcome = engine.evaluate(catalog.definitions.at(job.definition),
                                    catalog.workloads.at(job.workload),
                                    catalog.solutions.at(job.solution), d.mode, *d.worker);
      });
    }
    for (std::thread& t : threads) t.join();
    // A fault armed for a worker that got no job this round is dropped.
    for (Worker* w : live) w->take_kill();

    std::vector<std::size_t> retry;
    std::set<std::size_t> dispatched;
    for (Dispatch& d : dispatches) {
      Job& job = jobs[d.job];
      dispatched.insert(d.job);
      ++job.attempts;
      const Evaluation& e = d.outcome.evaluation;
      const bool again = d.outcome.retryable && job.attempts <= cfg.max_retries;
      report.attempts.push_back(
          {round, d.job, d.worker->id(), d.mode, e.status, d.outcome.retryable, !again});
      if (e.status == EvalStatus::kPassed && e.performance) {
        cm.update(job.solution, d.worker->id(), e.performance->latency_ms);
      }
      if (!again) {
        emit(d.job, std::move(d.outcome.evaluation));
        continue;
      }
      if (d.mode == ExecMode::kPersistent) {
        ++job.persistent_failures;
        if (job.persistent_failures >= cfg.defer_after) job.mode_override = ExecMode::kIsolated;
      }
      retry.push_back(d.job);
    }
    // Retries go first so a job is not starved behind fresh work.
    std::deque<std::size_t> next(retry.begin(), retry.end());
    for (std::size_t j : pending) {
      if (!dispatched.count(j)) next.push_back(j);
    }
    pending = std::move(next);

    // Health checks; dead slots are replaced from the spare pool.
    for (Worker*& w : workers) {
      if (w->state() != WorkerState::kDead && w->health_check(cfg.health_timeout)) continue;
      w->mark_dead();
      Worker* dead = w;
      if (cfg.max_respawns < 0 || respawned[dead->id()] < cfg.max_respawns) {
        dead->respawn();
        ++respawned[dead->id()];
        ++report.respawns;
        spare_pool.push_back(dead);
      }
      if (!spare_pool.empty()) {
        w = spare_pool.front();
        spare_pool.pop_front();
        if (w->state() == WorkerState::kDead) w->respawn();
        w->prewarm();
      }
    }
    ++round;
  }
  report.rounds = round;
  return report;
}

}  // namespace fib
