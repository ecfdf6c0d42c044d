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

#include "fib/feedback.h"

#include <poll.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <climits>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fib/error.h"
#include "fib/process.h"

namespace fib {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

DirectoryProvider::DirectoryProvider(const fs::path& dir) {
  std::error_code ec;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files_.push_back(entry.path());
    }
  }
  if (ec) throw Error(ErrorCode::kIo, "cannot list " + dir.string() + ": " + ec.message());
  std::sort(files_.begin(), files_.end());
}

std::optional<Solution> DirectoryProvider::next(int iteration, const Definition&,
                                                const std::string&) {
  if (iteration < 0 || static_cast<std::size_t>(iteration) >= files_.size()) return std::nullopt;
  std::ifstream in(files_[static_cast<std::size_t>(iteration)], std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_solution_text(ss.str());
}

CommandProvider::CommandProvider(std::vector<std::string> argv, std::chrono::milliseconds timeout)
    : argv_(std::move(argv)), timeout_(timeout) {
  if (argv_.empty()) throw Error(ErrorCode::kSchema, "provider command is empty");
}

std::optional<Solution> CommandProvider::next(int iteration, const Definition& d,
                                              const std::string& feedback) {
  ignore_sigpipe();
  json request;
  request["iteration"] = iteration;
  request["definition"] = definition_to_json(d);
  request["feedback"] = feedback;
  const std::string input = request.dump();

  ChildProcess child = ChildProcess::spawn({argv_, {}, {}, {}});
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  std::size_t written = 0;
  std::string output;
  bool out_open = true;
  // Feed stdin and drain stdout together so neither side can block the other.
  while (out_open) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      child.kill();
      throw Error(ErrorCode::kIo, "provider command timed out");
    }
    pollfd fds[2] = {{child.stdout_fd(), POLLIN, 0}, {child.stdin_fd(), POLLOUT, 0}};
    const nfds_t n = child.stdin_fd() >= 0 ? 2 : 1;
    if (::poll(fds, n, static_cast<int>(std::min<int64_t>(left.count(), 1000))) < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kIo, std::string("poll: ") + std::strerror(errno));
    }
    if (n == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      // POLLOUT guarantees PIPE_BUF bytes of room; more could block.
      const std::size_t chunk = std::min<std::size_t>(input.size() - written, PIPE_BUF);
      const ssize_t k = ::write(child.stdin_fd(), input.data() + written, chunk);
      if (k > 0) written += static_cast<std::size_t>(k);
      if (k < 0 && errno != EINTR && errno != EAGAIN) written = input.size();
      if (written == input.size()) child.close_stdin();
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[65536];
      const ssize_t k = ::read(child.stdout_fd(), buf, sizeof buf);
      if (k > 0) {
        output.append(buf, static_cast<std::size_t>(k));
      } else if (k == 0 || (errno != EINTR && errno != EAGAIN)) {
        out_open = false;
      }
    }
  }
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
      deadline - std::chrono::steady_clock::now());
  const std::optional<int> code = child.wait_exit(std::max(left, std::chrono::milliseconds(0)));
  if (!code || *code != 0 || output.find_first_not_of(" \t\r\n") == std::string::npos) {
    return std::nullopt;
  }
  return parse_solution_text(output);
}

std::string feedback_digest(const std::vector<TraceRecord>& records) {
  std::ostringstream os;
  for (const TraceRecord& t : records) {
    os << t.workload.uuid << ": ";
    if (!t.evaluation) {
      os << "no evaluation\n";
      continue;
    }
    const Evaluation& e = *t.evaluation;
    os << eval_status_name(e.status);
    if (e.performance) os << " speedup=" << e.performance->speedup_factor;
    if (e.correctness) os << " max_abs_err=" << e.correctness->max_absolute_error;
    if (e.status != EvalStatus::kPassed && !e.log.empty()) {
      os << " " << e.log.substr(0, e.log.find('\n'));
    }
    os << "\n";
  }
  return os.str();
}

std::optional<std::size_t> select_best(const std::vector<FeedbackIteration>& history) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (!history[i].passed_all) continue;
    if (!best || history[i].mean_speedup > history[*best].mean_speedup) best = i;
  }
  return best;
}

FeedbackResult run_feedback_loop(SolutionProvider& provider, const Definition& d,
                                 const std::vector<Workload>& workloads, int iterations,
                                 Engine& engine, Worker& worker, const FeedbackOptions& options) {
  FeedbackResult result;
  std::string feedback;
  for (int i = 0; i < iterations; ++i) {
    std::optional<Solution> candidate;
    try {
      candidate = provider.next(i, d, feedback);
    } catch (const Error& e) {
      feedback = "iteration " + std::to_string(i) + ": provider failed: " + e.what() + "\n";
      continue;
    }
    if (!candidate) break;
    FeedbackIteration it;
    it.iteration = i;
    it.solution = *candidate;
    it.passed_all = true;
    double speedup_sum = 0.0;
    auto bench = [&](const Workload& w, bool visible) {
      Evaluation e = engine.run_evaluation(d, w, it.solution, options.mode, worker);
      const bool pass = e.status == EvalStatus::kPassed && e.performance;
      it.passed_all = it.passed_all && pass;
      if (!visible) return;
      if (pass) speedup_sum += e.performance->speedup_factor;
      TraceRecord t;
      t.definition = d.name;
      t.workload = w;
      t.solution = it.solution.name;
      t.evaluation = std::move(e);
      it.records.push_back(std::move(t));
    };
    for (const Workload& w : workloads) bench(w, true);
    for (const Workload& w : options.hidden_workloads) bench(w, false);
    it.passed_all = it.passed_all && !workloads.empty();
    if (it.passed_all) it.mean_speedup = speedup_sum / static_cast<double>(workloads.size());
    feedback = feedback_digest(it.records);
    result.history.push_back(std::move(it));
  }
  const std::optional<std::size_t> best = select_best(result.history);
  if (!best) {
    std::string digest;
    for (const FeedbackIteration& it : result.history) {
      digest += "iteration " + std::to_string(it.iteration) + " (" + it.solution.name + ")\n" +
                feedback_digest(it.records);
    }
    throw Error(ErrorCode::kNoPassingSolution,
                "no candidate passed every workload\n" + digest);
  }
  result.best = result.history[*best].solution;
  result.best_records = result.history[*best].records;
  return result;
}

}  // namespace fib
