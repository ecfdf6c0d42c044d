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

#include "fib/worker.h"

#include <errno.h>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include "fib/error.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace fib {

namespace {

constexpr std::size_t kGrantHistory = 4096;

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

// --- PluginSession ----------------------------------------------------------

std::unique_ptr<PluginSession> PluginSession::start(const StagedSolution& staged,
                                                    const fs::path& stderr_path,
                                                    std::chrono::milliseconds timeout) {
  const auto t0 = std::chrono::steady_clock::now();
  std::unique_ptr<PluginSession> s(new PluginSession());
  s->stderr_path_ = stderr_path;
  LaunchSpec spec = staged.launch;
  spec.stderr_path = stderr_path;
  if (!stderr_path.empty()) fs::create_directories(stderr_path.parent_path());
  s->proc_ = ChildProcess::spawn(spec);

  nlohmann::json hello = {{"harness", "fib"}};
  try {
    write_frame(s->proc_.stdin_fd(), Frame::text(FrameType::kHello, hello.dump()));
  } catch (const Error&) {
    throw Error(ErrorCode::kIo, "plugin exited before HELLO: " + s->stderr_tail());
  }
  Frame reply;
  const ReadStatus st =
      read_frame(s->proc_.stdout_fd(), reply, std::chrono::steady_clock::now() + timeout);
  if (st == ReadStatus::kTimeout) {
    throw Error(ErrorCode::kIo, "no HELLO from plugin within timeout");
  }
  if (st == ReadStatus::kEof) {
    throw Error(ErrorCode::kIo, "plugin exited before HELLO: " + s->stderr_tail());
  }
  if (reply.type != FrameType::kHello) {
    throw Error(ErrorCode::kProtocol, "expected HELLO, got " +
                                          std::string(frame_type_name(reply.type)) + ": " +
                                          reply.payload_text());
  }
  if (!reply.payload.empty()) {
    try {
      const auto v = nlohmann::json::parse(reply.payload_text());
      for (const auto& [k, val] : v.items()) {
        s->versions_[k] = val.is_string() ? val.get<std::string>() : val.dump();
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kProtocol, std::string("HELLO payload: ") + e.what());
    }
  }
  s->bootstrap_ms_ = ms_since(t0);
  return s;
}

PluginSession::~PluginSession() { close(); }

std::string PluginSession::stderr_tail(std::size_t max_bytes) const {
  if (stderr_path_.empty()) return {};
  std::ifstream in(stderr_path_, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  if (text.size() > max_bytes) text = "..." + text.substr(text.size() - max_bytes);
  return text;
}

RunOutcome PluginSession::run(std::span<const uint8_t> run_payload,
                              std::chrono::milliseconds timeout, bool kill_after_send) {
  RunOutcome out;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  try {
    write_frame(proc_.stdin_fd(),
                Frame{FrameType::kRun, {run_payload.begin(), run_payload.end()}});
  } catch (const Error& e) {
    proc_.kill();
    out.kind = RunOutcome::Kind::kDied;
    out.detail = std::string("plugin gone while sending RUN: ") + e.what();
    return out;
  }
  if (kill_after_send) proc_.kill();
  Frame reply;
  try {
    const ReadStatus st = read_frame(proc_.stdout_fd(), reply, deadline);
    if (st == ReadStatus::kTimeout) {
      proc_.kill();
      out.kind = RunOutcome::Kind::kTimeout;
      out.detail = "deadline of " + std::to_string(timeout.count()) + " ms exceeded";
      return out;
    }
    if (st == ReadStatus::kEof) {
      const auto status = proc_.wait_exit(std::chrono::milliseconds(500));
      proc_.kill();
      out.kind = RunOutcome::Kind::kDied;
      out.detail = "plugin exited during RUN";
      if (status) out.detail += " (status " + std::to_string(*status) + ")";
      const std::string tail = stderr_tail();
      if (!tail.empty()) out.detail += ": " + tail;
      return out;
    }
  } catch (const Error& e) {
    proc_.kill();
    out.kind = RunOutcome::Kind::kProtocol;
    out.detail = std::string("protocol error: ") + e.what();
    return out;
  }
  switch (reply.type) {
    case FrameType::kResult:
      try {
        out.outputs = decode_result_payload(reply.payload);
      } catch (const Error& e) {
        proc_.kill();
        out.kind = RunOutcome::Kind::kProtocol;
        out.detail = std::string("protocol error: ") + e.what();
      }
      return out;
    case FrameType::kError:
      out.kind = RunOutcome::Kind::kError;
      out.detail = reply.payload_text();
      return out;
    default:
      proc_.kill();
      out.kind = RunOutcome::Kind::kProtocol;
      out.detail = "protocol error: unexpected " + std::string(frame_type_name(reply.type)) +
                   " frame in reply to RUN";
      return out;
  }
}

bool PluginSession::ping(std::chrono::milliseconds timeout) {
  if (!proc_.alive()) return false;
  try {
    write_frame(proc_.stdin_fd(), Frame{FrameType::kPing, {}});
    Frame reply;
    if (read_frame(proc_.stdout_fd(), reply, std::chrono::steady_clock::now() + timeout) !=
        ReadStatus::kOk) {
      return false;
    }
    return reply.type == FrameType::kPing;
  } catch (const Error&) {
    return false;
  }
}

void PluginSession::close() {
  if (!proc_.valid()) return;
  if (proc_.alive()) {
    try {
      write_frame(proc_.stdin_fd(), Frame{FrameType::kBye, {}});
    } catch (const Error&) {
    }
    proc_.close_stdin();
    if (!proc_.wait_exit(std::chrono::milliseconds(200))) proc_.kill();
  }
}

// --- Worker -------------------------------------------------------------------

Worker::Worker(int id, const fs::path& lock_dir)
    : id_(id), lock_path_(lock_dir / ("worker-" + std::to_string(id) + ".lock")) {}

Worker::~Worker() {
  shutdown();
  if (lock_fd_ >= 0) ::close(lock_fd_);
}

Worker::Lock& Worker::Lock::operator=(Lock&& o) noexcept {
  if (this != &o) {
    release();
    w_ = std::exchange(o.w_, nullptr);
    ticket_ = o.ticket_;
  }
  return *this;
}

void Worker::Lock::release() {
  if (w_ != nullptr) w_->unlock(ticket_);
  w_ = nullptr;
}

void Worker::prewarm() {
  std::lock_guard<std::mutex> g(mu_);
  if (lock_fd_ < 0) {
    fs::create_directories(lock_path_.parent_path());
    lock_fd_ = ::open(lock_path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (lock_fd_ < 0) throw Error(ErrorCode::kIo, "cannot open " + lock_path_.string());
  }
  prewarmed_.store(true);
}

Worker::Lock Worker::acquire() {
  if (lock_fd_ < 0) prewarm();
  std::unique_lock<std::mutex> g(mu_);
  const uint64_t ticket = next_ticket_++;
  cv_.wait(g, [&] { return serving_ == ticket; });
  g.unlock();
  // Other harness processes contend here; threads of this process are already
  // serialized by the ticket.
  while (::flock(lock_fd_, LOCK_EX) != 0) {
    if (errno != EINTR) {
      unlock(ticket);
      throw Error(ErrorCode::kIo, "flock " + lock_path_.string());
    }
  }
  g.lock();
  grants_.push_back(ticket);
  if (grants_.size() > kGrantHistory) grants_.erase(grants_.begin());
  Lock lock(this);
  lock.ticket_ = ticket;
  return lock;
}

void Worker::unlock(uint64_t /*ticket*/) {
  {
    std::lock_guard<std::mutex> g(mu_);
    ::flock(lock_fd_, LOCK_UN);
    ++serving_;
  }
  cv_.notify_all();
}

std::vector<uint64_t> Worker::grant_order() const {
  std::lock_guard<std::mutex> g(mu_);
  return grants_;
}

void Worker::set_busy(bool busy) {
  WorkerState expected = busy ? WorkerState::kIdle : WorkerState::kBusy;
  state_.compare_exchange_strong(expected, busy ? WorkerState::kBusy : WorkerState::kIdle);
}

void Worker::mark_dead() {
  state_.store(WorkerState::kDead);
  std::lock_guard<std::mutex> g(state_mu_);
  for (auto& [hash, slot] : sessions_) slot.session->kill();
  sessions_.clear();
}

void Worker::respawn() {
  {
    std::lock_guard<std::mutex> g(state_mu_);
    for (auto& [hash, slot] : sessions_) slot.session->kill();
    sessions_.clear();
    warm_.clear();
    references_.clear();
    resident_defs_.clear();
  }
  generation_.fetch_add(1);
  kill_armed_.store(false);
  state_.store(WorkerState::kIdle);
}

bool Worker::health_check(std::chrono::milliseconds timeout) {
  if (state_.load() == WorkerState::kDead) return false;
  std::lock_guard<std::mutex> g(state_mu_);
  for (auto& [hash, slot] : sessions_) {
    if (!slot.session->ping(timeout)) {
      state_.store(WorkerState::kDead);
      return false;
    }
  }
  return true;
}

void Worker::shutdown() {
  std::lock_guard<std::mutex> g(state_mu_);
  for (auto& [hash, slot] : sessions_) slot.session->close();
  sessions_.clear();
}

PluginSession* Worker::find_session(const std::string& content_hash) {
  std::lock_guard<std::mutex> g(state_mu_);
  auto it = sessions_.find(content_hash);
  if (it == sessions_.end()) return nullptr;
  if (!it->second.session->alive()) {
    sessions_.erase(it);
    return nullptr;
  }
  return it->second.session.get();
}

PluginSession* Worker::put_session(const std::string& content_hash,
                                   const std::string& solution,
                                   std::unique_ptr<PluginSession> session) {
  std::lock_guard<std::mutex> g(state_mu_);
  warm_.insert(solution);
  auto& slot = sessions_[content_hash];
  slot.solution = solution;
  slot.session = std::move(session);
  return slot.session.get();
}

void Worker::drop_session(const std::string& content_hash) {
  std::lock_guard<std::mutex> g(state_mu_);
  sessions_.erase(content_hash);
}

std::set<std::string> Worker::warm_solutions() const {
  std::lock_guard<std::mutex> g(state_mu_);
  return warm_;
}

const ReferenceEntry* Worker::find_reference(const std::string& key) const {
  std::lock_guard<std::mutex> g(state_mu_);
  auto it = references_.find(key);
  return it == references_.end() ? nullptr : &it->second;
}

void Worker::put_reference(const std::string& key, const std::string& definition,
                           ReferenceEntry entry) {
  std::lock_guard<std::mutex> g(state_mu_);
  references_[key] = std::move(entry);
  resident_defs_.insert(definition);
}

std::set<std::string> Worker::resident_definitions() const {
  std::lock_guard<std::mutex> g(state_mu_);
  return resident_defs_;
}

}  // namespace fib
