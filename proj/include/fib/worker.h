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

#ifndef FIB_WORKER_H_
#define FIB_WORKER_H_

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fib/frame.h"
#include "fib/process.h"
#include "fib/staging.h"
#include "fib/tensor.h"

namespace fib {

// Outcome of one RUN round trip.
struct RunOutcome {
  enum class Kind { kOk, kError, kTimeout, kDied, kProtocol };
  Kind kind = Kind::kOk;
  TensorMap outputs;
  std::string detail;
};

// One live plugin process speaking the frame protocol.
class PluginSession {
 public:
  // Spawns the staged plugin and completes the HELLO exchange. Throws
  // Error(kIo) or Error(kProtocol) when the plugin fails to come up.
  static std::unique_ptr<PluginSession> start(const StagedSolution& staged,
                                              const std::filesystem::path& stderr_path,
                                              std::chrono::milliseconds timeout);
  ~PluginSession();

  const std::map<std::string, std::string>& versions() const { return versions_; }
  double bootstrap_ms() const { return bootstrap_ms_; }
  const std::filesystem::path& stderr_path() const { return stderr_path_; }
  std::string stderr_tail(std::size_t max_bytes = 2000) const;

  // Sends a pre-encoded RUN payload and waits for the reply. When `kill_after_send`
  // is set the process is killed right after the frame leaves (fault injection).
  RunOutcome run(std::span<const uint8_t> run_payload, std::chrono::milliseconds timeout,
                 bool kill_after_send = false);
  bool ping(std::chrono::milliseconds timeout);
  // BYE and a short grace period, then SIGKILL.
  void close();
  void kill() { proc_.kill(); }
  bool alive() { return proc_.alive(); }

 private:
  PluginSession() = default;

  ChildProcess proc_;
  std::map<std::string, std::string> versions_;
  std::filesystem::path stderr_path_;
  double bootstrap_ms_ = 0.0;
};

enum class WorkerState { kIdle, kBusy, kDead };

struct ReferenceEntry {
  TensorMap outputs;
  double latency_ms = 0.0;
};

// A worker slot: an exclusive lock (FIFO among threads of this process,
// flock-backed across processes), the plugin processes it keeps alive in
// persistent mode, and reference outputs it holds resident.
class Worker {
 public:
  Worker(int id, const std::filesystem::path& lock_dir);
  ~Worker();
  Worker(const Worker&) = delete;
  Worker& operator=(const Worker&) = delete;

  class Lock {
   public:
    Lock() = default;
    explicit Lock(Worker* w) : w_(w) {}
    Lock(Lock&& o) noexcept : w_(std::exchange(o.w_, nullptr)) {}
    Lock& operator=(Lock&& o) noexcept;
    ~Lock() { release(); }
    void release();
    bool held() const { return w_ != nullptr; }
    uint64_t ticket() const { return ticket_; }

   private:
    friend class Worker;
    Worker* w_ = nullptr;
    uint64_t ticket_ = 0;
  };

  // Blocks until this caller's ticket is served and the file lock is taken.
  Lock acquire();
  // Tickets in the order the lock was granted (bounded history).
  std::vector<uint64_t> grant_order() const;

  int id() const { return id_; }
  WorkerState state() const { return state_.load(); }
  bool prewarmed() const { return prewarmed_.load(); }
  uint64_t generation() const { return generation_.load(); }

  // Creates the lock file and cache directories ahead of first use.
  void prewarm();
  void mark_dead();
  // Kills every session, drops resident references and returns to idle.
  void respawn();
  // PINGs every session; a failed reply marks the worker dead.
  bool health_check(std::chrono::milliseconds timeout);
  // BYE to every session.
  void shutdown();

  // Persistent sessions, keyed by staged content hash. Callers hold the lock.
  PluginSession* find_session(const std::string& content_hash);
  PluginSession* put_session(const std::string& content_hash, const std::string& solution,
                             std::unique_ptr<PluginSession> session);
  void drop_session(const std::string& content_hash);
  // Names of solutions bootstrapped since the last (re)spawn.
  std::set<std::string> warm_solutions() const;

  const ReferenceEntry* find_reference(const std::string& key) const;
  void put_reference(const std::string& key, const std::string& definition,
                     ReferenceEntry entry);
  std::set<std::string> resident_definitions() const;

  // One-shot fault injection: the next RUN sent from this worker is followed
  // by a SIGKILL of the plugin process.
  void arm_kill() { kill_armed_.store(true); }
  bool take_kill() { return kill_armed_.exchange(false); }

  void set_busy(bool busy);

 private:
  void unlock(uint64_t ticket);

  const int id_;
  std::filesystem::path lock_path_;
  int lock_fd_ = -1;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  uint64_t next_ticket_ = 0;
  uint64_t serving_ = 0;
  std::vector<uint64_t> grants_;

  std::atomic<WorkerState> state_{WorkerState::kIdle};
  std::atomic<bool> prewarmed_{false};
  std::atomic<uint64_t> generation_{0};
  std::atomic<bool> kill_armed_{false};

  mutable std::mutex state_mu_;
  struct SessionSlot {
    std::string solution;
    std::unique_ptr<PluginSession> session;
  };
  std::map<std::string, SessionSlot> sessions_;
  std::set<std::string> warm_;
  std::map<std::string, ReferenceEntry> references_;
  std::set<std::string> resident_defs_;
};

}  // namespace fib

#endif  // FIB_WORKER_H_
