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

// Command-line front end: validate, bench, report, apply-demo, loop.
//
// Exit codes: 0 success, 1 validation or evaluation failures present,
// 2 operational error.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fib/dataset.h"
#include "fib/dispatch.h"
#include "fib/engine.h"
#include "fib/error.h"
#include "fib/feedback.h"
#include "fib/metrics.h"
#include "fib/reference.h"
#include "fib/scheduler.h"
#include "fib/validators.h"

namespace {

namespace fs = std::filesystem;
using fib::ErrorCode;

constexpr int kOk = 0;
constexpr int kFailures = 1;
constexpr int kOperational = 2;

struct CliConfig {
  fs::path dataset;
  int workers = 1;
  std::string mode = "persistent";
  int warmup = 10;
  int runs = 50;
  int timeout_ms = 10000;
  uint64_t seed = 0;
  std::string filter_definition;
  std::string filter_solution;
  fs::path out;
  fs::path work_dir;
  std::vector<std::string> tolerances;  // dtype=abs,rel
};

fs::path work_dir(const CliConfig& c) {
  return c.work_dir.empty() ? c.dataset / ".fib" : c.work_dir;
}

std::pair<fib::DType, fib::Tolerance> parse_tolerance(const std::string& text) {
  const auto eq = text.find('=');
  const auto comma = text.find(',', eq == std::string::npos ? 0 : eq);
  if (eq == std::string::npos || comma == std::string::npos) {
    throw fib::Error(ErrorCode::kSchema, "tolerance must look like dtype=abs,rel: " + text);
  }
  fib::Tolerance t;
  try {
    t.eps_abs = std::stod(text.substr(eq + 1, comma - eq - 1));
    t.eps_rel = std::stod(text.substr(comma + 1));
  } catch (const std::exception&) {
    throw fib::Error(ErrorCode::kSchema, "bad tolerance numbers: " + text);
  }
  return {fib::parse_dtype(text.substr(0, eq)), t};
}

fib::EngineConfig engine_config(const CliConfig& c) {
  fib::EngineConfig e;
  e.timing.warmup = c.warmup;
  e.timing.runs = c.runs;
  e.timing.timeout = std::chrono::milliseconds(c.timeout_ms);
  e.session_seed = c.seed;
  e.work_dir = work_dir(c);
  e.data_root = c.dataset;
  e.stochastic.seed = c.seed;
  for (const std::string& t : c.tolerances) {
    const auto [dtype, tol] = parse_tolerance(t);
    e.tolerance_overrides[dtype] = tol;
  }
  return e;
}

void add_common(CLI::App* cmd, CliConfig& c) {
  cmd->add_option("--dataset", c.dataset, "Dataset directory")->required();
  cmd->add_option("--seed", c.seed, "Session seed");
}

void add_engine_flags(CLI::App* cmd, CliConfig& c) {
  cmd->add_option("--mode", c.mode, "isolated or persistent")
      ->check(CLI::IsMember({"isolated", "persistent"}));
  cmd->add_option("--warmup", c.warmup, "Untimed warmup runs")->check(CLI::NonNegativeNumber);
  cmd->add_option("--runs", c.runs, "Timed runs")->check(CLI::PositiveNumber);
  cmd->add_option("--timeout-ms", c.timeout_ms, "Per-execution timeout")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--tolerance", c.tolerances, "Override as dtype=abs,rel (repeatable)");
  cmd->add_option("--work-dir", c.work_dir, "Build cache and logs (default: <dataset>/.fib)");
}

std::string status_line(const fib::TraceRecord& t) {
  std::ostringstream os;
  os << t.solution.value_or("?") << " " << t.workload.uuid << " "
     << fib::eval_status_name(t.evaluation->status);
  if (t.evaluation->performance) os << " speedup=" << t.evaluation->performance->speedup_factor;
  return os.str();
}

// --- validate -----------------------------------------------------------------

int cmd_validate(const CliConfig& c) {
  const fib::ScanResult r = fib::scan_dataset(c.dataset);
  for (const fib::Violation& v : r.violations) {
    std::cout << v.file.string() << ": " << (v.field.empty() ? "<document>" : v.field) << ": "
              << v.message << "\n";
  }
  std::cout << r.violations.size() << " violation(s); " << r.dataset.definitions.size()
            << " definitions, " << r.dataset.solutions.size() << " solutions, "
            << r.dataset.traces.size() << " traces\n";
  return r.violations.empty() ? kOk : kFailures;
}

// --- bench --------------------------------------------------------------------

int cmd_bench(const CliConfig& c) {
  const fib::Dataset ds = fib::load_dataset(c.dataset);
  std::vector<fib::Job> jobs;
  for (const auto& [name, d] : ds.definitions) {
    if (!c.filter_definition.empty() && name != c.filter_definition) continue;
    const std::vector<fib::Workload> workloads = ds.workloads(name);
    for (const fib::Solution* s : ds.solutions_for(name)) {
      if (!c.filter_solution.empty() && s->name != c.filter_solution) continue;
      for (const fib::Workload& w : workloads) {
        fib::Job j;
        j.definition = name;
        j.workload = w.uuid;
        j.solution = s->name;
        jobs.push_back(std::move(j));
      }
    }
  }
  if (jobs.empty()) {
    std::cout << "no matching jobs\n";
    return kOk;
  }
  fib::Engine engine(engine_config(c));
  std::vector<std::unique_ptr<fib::Worker>> owned;
  std::vector<fib::Worker*> workers;
  for (int i = 0; i < c.workers; ++i) {
    owned.push_back(std::make_unique<fib::Worker>(i, work_dir(c) / "locks"));
    workers.push_back(owned.back().get());
  }
  fib::SchedulerConfig sc;
  sc.mode = fib::parse_exec_mode(c.mode);
  fib::CostModel cm;
  const fib::ScheduleReport report =
      fib::schedule_loop(jobs, ds.catalog(), workers, {}, engine, cm, sc, {},
                         [](std::size_t, const fib::TraceRecord& t) {
                           std::cout << status_line(t) << "\n" << std::flush;
                         });
  fib::append_records(c.dataset, report.records);
  int failed = 0;
  for (const fib::TraceRecord& t : report.records) {
    failed += t.evaluation->status == fib::EvalStatus::kPassed ? 0 : 1;
  }
  std::cout << report.records.size() << " record(s), " << failed << " not passed, "
            << report.rounds << " round(s)\n";
  return failed == 0 ? kOk : kFailures;
}

// --- report -------------------------------------------------------------------

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream of(p, std::ios::binary | std::ios::trunc);
  of << text;
  if (!of) throw fib::Error(ErrorCode::kIo, "cannot write " + p.string());
}

std::string file_safe(std::string s) {
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  }
  return s;
}

int cmd_report(const CliConfig& c) {
  const fib::Dataset ds = fib::load_dataset(c.dataset);
  std::vector<fib::TraceRecord> evals = ds.evaluations();
  if (!c.filter_definition.empty()) {
    std::erase_if(evals, [&](const fib::TraceRecord& t) {
      return t.definition != c.filter_definition;
    });
  }
  if (evals.empty()) throw fib::Error(ErrorCode::kEmptyEvalSet, "no evaluations to report");
  const auto rows = fib::aggregate_leaderboard(evals, ds.solutions);
  const fs::path out = c.out.empty() ? fs::path("fib-report") : c.out;
  fs::create_directories(out / "curves");
  write_text(out / "leaderboard.csv", fib::leaderboard_csv(rows));
  write_text(out / "leaderboard.json", fib::leaderboard_json(rows).dump(2) + "\n");
  for (const fib::LeaderboardRow& r : rows) {
    write_text(out / "curves" / (file_safe(r.author) + "__" + file_safe(r.definition) + ".csv"),
               fib::curve_csv(r.curve));
  }
  std::printf("%-20s %-32s %5s %9s %8s\n", "author", "definition", "sols", "correct", "auc");
  for (const fib::LeaderboardRow& r : rows) {
    std::printf("%-20s %-32s %5d %9.3f %8.4f\n", r.author.c_str(), r.definition.c_str(),
                r.solutions, r.correctness_rate, r.auc);
  }
  std::cout << "wrote " << (out / "leaderboard.csv").string() << "\n";
  return kOk;
}

// --- apply-demo ---------------------------------------------------------------

std::map<std::string, int64_t> parse_axes(const std::string& text) {
  std::map<std::string, int64_t> axes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw fib::Error(ErrorCode::kSchema, "axis must be name=value");
    try {
      axes[item.substr(0, eq)] = std::stoll(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw fib::Error(ErrorCode::kSchema, "bad axis value: " + item);
    }
  }
  return axes;
}

struct ApplyDemoArgs {
  std::string definition;
  std::string axes;
  int calls = 1000;
  double error_threshold = 1e-2;
  double aot_ratio = 0.5;
  bool fallback_substitution = false;
  fs::path index_out;
};

int cmd_apply_demo(const CliConfig& c, const ApplyDemoArgs& a) {
  const fib::Dataset ds = fib::load_dataset(c.dataset);
  auto d_it = ds.definitions.find(a.definition);
  if (d_it == ds.definitions.end()) {
    throw fib::Error(ErrorCode::kUnboundName, "unknown definition " + a.definition);
  }
  const fib::Definition& d = d_it->second;
  constexpr const char* kFallbackName = "__fallback__";
  std::vector<fib::TraceRecord> traces = ds.evaluations();
  if (a.fallback_substitution) {
    // Every indexed key routes back to the fallback itself.
    for (fib::TraceRecord& t : traces) t.solution = kFallbackName;
  }
  const fib::ApplyConfig ac{a.error_threshold, a.aot_ratio, {}};
  auto index = std::make_shared<fib::DispatchIndex>(fib::build_index(traces, ds.definitions, ac));
  if (index->empty()) throw fib::Error(ErrorCode::kEmptyDataset, "dispatch index has no entries");
  if (!a.index_out.empty()) index->save(a.index_out);

  fib::Engine engine(engine_config(c));
  fib::Worker worker(0, work_dir(c) / "locks");
  std::shared_ptr<fib::DispatchBackend> backend;
  const auto reference = [&d](const fib::TensorMap& in) { return fib::run_reference(d, in); };
  if (a.fallback_substitution) {
    auto in_process = std::make_shared<fib::InProcessBackend>();
    in_process->add(kFallbackName, reference);
    backend = in_process;
  } else {
    backend = std::make_shared<fib::PluginBackend>(engine, worker, ds.solutions);
  }
  fib::Dispatcher dispatcher(index, backend);

  fib::Workload w;
  w.uuid = "apply-demo";
  w.axes = parse_axes(a.axes);
  for (const auto& [name, spec] : d.inputs) w.inputs.push_back({name, fib::InputSpec{}});
  const fib::TensorMap inputs = engine.prepare_inputs(d, w);

  using Clock = std::chrono::steady_clock;
  auto per_call_us = [&](auto&& fn) {
    const auto t0 = Clock::now();
    for (int i = 0; i < a.calls; ++i) fn();
    return std::chrono::duration<double, std::micro>(Clock::now() - t0).count() / a.calls;
  };
  fib::TensorMap fallback_out, routed_out;
  const double fallback_us = per_call_us([&] { fallback_out = reference(inputs); });
  const double routed_us =
      per_call_us([&] { routed_out = dispatcher.apply(d.name, inputs, w.axes, reference); });

  bool match = true;
  for (const auto& [name, spec] : d.outputs) {
    const fib::ValidationVerdict v = fib::check_deterministic(
        routed_out.at(name), fallback_out.at(name), fib::default_tolerance(spec.dtype));
    match = match && v.passed;
  }
  const fib::IndexEntry* hit = index->lookup(d.name, w.axes);
  const fib::DispatchStats s = dispatcher.stats();
  std::printf("enabled: %s\n", dispatcher.enabled() ? "yes" : "no");
  std::printf("selected: %s\n", hit ? hit->solution.c_str() : "(none)");
  std::printf("calls: %d\n", a.calls);
  std::printf("fallback_us_per_call: %.3f\n", fallback_us);
  std::printf("routed_us_per_call: %.3f\n", routed_us);
  std::printf("overhead_us_per_call: %.3f\n", routed_us - fallback_us);
  std::printf("overhead_ratio: %.5f\n", routed_us / fallback_us);
  std::printf("probes: %llu\n", static_cast<unsigned long long>(s.probes));
  std::printf("routed: %llu\n", static_cast<unsigned long long>(s.routed));
  std::printf("fallbacks: %llu\n", static_cast<unsigned long long>(s.fallbacks));
  std::printf("outputs_match: %s\n", match ? "yes" : "no");
  worker.shutdown();
  return match ? kOk : kFailures;
}

// --- loop ---------------------------------------------------------------------

int cmd_loop(const CliConfig& c, const std::string& definition, const std::string& provider,
             int iterations) {
  const fib::Dataset ds = fib::load_dataset(c.dataset);
  auto d_it = ds.definitions.find(definition);
  if (d_it == ds.definitions.end()) {
    throw fib::Error(ErrorCode::kUnboundName, "unknown definition " + definition);
  }
  std::unique_ptr<fib::SolutionProvider> p;
  if (provider.starts_with("dir:")) {
    p = std::make_unique<fib::DirectoryProvider>(provider.substr(4));
  } else if (provider.starts_with("cmd:")) {
    p = std::make_unique<fib::CommandProvider>(
        std::vector<std::string>{"/bin/sh", "-c", provider.substr(4)});
  } else {
    throw fib::Error(ErrorCode::kSchema, "provider must be dir:PATH or cmd:COMMAND");
  }
  fib::Engine engine(engine_config(c));
  fib::Worker worker(0, work_dir(c) / "locks");
  fib::FeedbackOptions opts;
  opts.mode = fib::parse_exec_mode(c.mode);
  const std::vector<fib::Workload> workloads = ds.workloads(definition);
  try {
    const fib::FeedbackResult r =
        fib::run_feedback_loop(*p, d_it->second, workloads, iterations, engine, worker, opts);
    for (const fib::FeedbackIteration& it : r.history) {
      std::cout << "iteration " << it.iteration << " " << it.solution.name << " "
                << (it.passed_all ? "passed" : "failed");
      if (it.passed_all) std::cout << " mean_speedup=" << it.mean_speedup;
      std::cout << "\n";
    }
    if (!ds.solutions.count(r.best.name)) {
      fs::create_directories(c.dataset / "solutions");
      write_text(c.dataset / "solutions" / (file_safe(r.best.name) + ".json"),
                 fib::serialize_solution(r.best) + "\n");
    }
    fib::append_records(c.dataset, r.best_records);
    std::cout << "best: " << r.best.name << "\n";
    worker.shutdown();
    return kOk;
  } catch (const fib::Error& e) {
    worker.shutdown();
    if (e.code() != ErrorCode::kNoPassingSolution) throw;
    std::cout << "NoPassingSolution: " << e.what() << "\n";
    return kFailures;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmarking, leaderboard and dispatch tools"};
  app.require_subcommand(1);
  CliConfig c;

  CLI::App* validate = app.add_subcommand("validate", "Check every document in a dataset");
  validate->add_option("--dataset", c.dataset, "Dataset directory")->required();

  CLI::App* bench = app.add_subcommand("bench", "Evaluate every solution on every workload");
  add_common(bench, c);
  add_engine_flags(bench, c);
  bench->add_option("--workers", c.workers, "Worker slots")->check(CLI::PositiveNumber);
  bench->add_option("--filter-definition", c.filter_definition, "Only this definition");
  bench->add_option("--filter-solution", c.filter_solution, "Only this solution");

  CLI::App* report = app.add_subcommand("report", "Leaderboard and fast_p curves");
  report->add_option("--dataset", c.dataset, "Dataset directory")->required();
  report->add_option("--filter-definition", c.filter_definition, "Only this definition");
  report->add_option("--out", c.out, "Output directory (default: fib-report)");

  ApplyDemoArgs ad;
  CLI::App* apply = app.add_subcommand("apply-demo", "Compare fallback and routed calls");
  add_common(apply, c);
  add_engine_flags(apply, c);
  apply->add_option("--definition", ad.definition, "Definition name")->required();
  apply->add_option("--axes", ad.axes, "Runtime axes, e.g. M=8")->required();
  apply->add_option("--calls", ad.calls, "Calls per side")->check(CLI::PositiveNumber);
  apply->add_option("--error-threshold", ad.error_threshold, "Max relative error kept");
  apply->add_option("--aot-ratio", ad.aot_ratio, "Fraction bootstrapped eagerly")
      ->check(CLI::Range(0.0, 1.0));
  apply->add_flag("--fallback-substitution", ad.fallback_substitution,
                  "Route indexed keys back to the fallback");
  apply->add_option("--index", ad.index_out, "Also write the index here");

  std::string loop_def, provider;
  int iterations = 3;
  CLI::App* loop = app.add_subcommand("loop", "Feedback loop over provided candidates");
  add_common(loop, c);
  add_engine_flags(loop, c);
  loop->add_option("--definition", loop_def, "Definition name")->required();
  loop->add_option("--provider", provider, "dir:PATH or cmd:COMMAND")->required();
  loop->add_option("--iterations", iterations, "Candidates to try")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kOperational;
  }

  try {
    if (*validate) return cmd_validate(c);
    if (*bench) return cmd_bench(c);
    if (*report) return cmd_report(c);
    if (*apply) return cmd_apply_demo(c, ad);
    if (*loop) return cmd_loop(c, loop_def, provider, iterations);
  } catch (const fib::Error& e) {
    std::cerr << "error: " << fib::error_code_name(e.code()) << ": " << e.what() << "\n";
    return kOperational;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOperational;
  }
  return kOperational;
}
