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

#ifndef FIB_DISPATCH_H_
#define FIB_DISPATCH_H_

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fib/engine.h"
#include "fib/tensor.h"
#include "fib/trace.h"
#include "fib/worker.h"

namespace fib {

// Rounds up to the next power of two; values <= 1 map to themselves (0 for
// negatives). Monotone.
int64_t bucket_pow2(int64_t value);

struct DispatchKey {
  std::string definition;
  std::vector<int64_t> buckets;  // one per feature axis, in feature order
  bool operator==(const DispatchKey&) const = default;
};

enum class BootstrapMode { kAot, kJit };

struct IndexEntry {
  DispatchKey key;
  std::string solution;
  double latency_ms = 0.0;
  BootstrapMode bootstrap = BootstrapMode::kJit;
  bool operator==(const IndexEntry&) const = default;
};

struct ApplyConfig {
  double error_threshold = 1e-2;  // on max_relative_error
  double aot_ratio = 0.5;         // of distinct selected solutions
  // Per definition; definitions not listed use all their var axes.
  std::map<std::string, std::vector<std::string>> feature_axes;
};

// True iff FIB_ENABLE_APPLY is "1".
bool apply_enabled_from_env();

class DispatchIndex {
 public:
  // Builds the key for `axes`; nullopt when the definition is not indexed or
  // a feature axis is missing.
  std::optional<DispatchKey> make_key(std::string_view definition,
                                      const std::map<std::string, int64_t>& axes) const;
  // One hash probe.
  const IndexEntry* find(const DispatchKey& key) const;
  const IndexEntry* lookup(std::string_view definition,
                           const std::map<std::string, int64_t>& axes) const;
  // lookup() without building a DispatchKey, for the per-call path. Sets
  // `keyed` when the key could be formed.
  const IndexEntry* probe(std::string_view definition,
                          const std::map<std::string, int64_t>& axes, bool* keyed) const;

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  // Entries sorted by (definition, buckets).
  std::vector<IndexEntry> entries() const;
  using FeatureMap = std::map<std::string, std::vector<std::string>, std::less<>>;
  const FeatureMap& feature_axes() const { return features_; }
  double error_threshold() const { return error_threshold_; }
  double aot_ratio() const { return aot_ratio_; }
  const std::string& dataset_hash() const { return dataset_hash_; }

  nlohmann::ordered_json to_json() const;
  // Throws Error(kSchema) for an unknown version or malformed document.
  static DispatchIndex from_json(const nlohmann::ordered_json& doc);
  void save(const std::filesystem::path& path) const;
  static DispatchIndex load(const std::filesystem::path& path);

  bool operator==(const DispatchIndex& o) const;

 private:
  friend DispatchIndex build_index(const std::vector<TraceRecord>&,
                                   const std::map<std::string, Definition>&, const ApplyConfig&);
  void insert(IndexEntry e);

  FeatureMap features_;
  std::unordered_map<uint64_t, std::vector<IndexEntry>> table_;
  std::size_t size_ = 0;
  double error_threshold_ = 0.0;
  double aot_ratio_ = 0.0;
  std::string dataset_hash_;
};

// Keeps PASSED evaluations within the error threshold, groups them by key and
// picks, per key, the solution with the lowest mean latency among those with
// no rejected evaluation under that key (ties: smaller name). The most often
// selected solutions, aot_ratio of them, are marked for eager bootstrap.
// An index with no entries is valid; every lookup then falls back.
DispatchIndex build_index(const std::vector<TraceRecord>& traces,
                          const std::map<std::string, Definition>& definitions,
                          const ApplyConfig& cfg);

// Where routed calls go.
class DispatchBackend {
 public:
  virtual ~DispatchBackend() = default;
  // Throws on failure.
  virtual void bootstrap(const std::string& solution) = 0;
  virtual TensorMap run(const std::string& solution, const std::string& definition,
                        const TensorMap& inputs, const std::map<std::string, int64_t>& axes) = 0;
};

// Solutions implemented as functions in this process.
class InProcessBackend : public DispatchBackend {
 public:
  using Kernel = std::function<TensorMap(const TensorMap&)>;
  void add(const std::string& solution, Kernel k) { kernels_[solution] = std::move(k); }
  void bootstrap(const std::string& solution) override;
  TensorMap run(const std::string& solution, const std::string& definition,
                const TensorMap& inputs, const std::map<std::string, int64_t>& axes) override;

 private:
  std::map<std::string, Kernel> kernels_;
};

// Solutions run as persistent plugins on one worker.
class PluginBackend : public DispatchBackend {
 public:
  PluginBackend(Engine& engine, Worker& worker, std::map<std::string, Solution> solutions);
  void bootstrap(const std::string& solution) override;
  TensorMap run(const std::string& solution, const std::string& definition,
                const TensorMap& inputs, const std::map<std::string, int64_t>& axes) override;

 private:
  const Solution& find(const std::string& solution) const;
  Engine& engine_;
  Worker& worker_;
  std::map<std::string, Solution> solutions_;
};

struct DispatchStats {
  uint64_t calls = 0;
  uint64_t probes = 0;
  uint64_t routed = 0;
  uint64_t fallbacks = 0;
  uint64_t bootstraps = 0;
  uint64_t failures = 0;
  uint64_t demotions = 0;
};

// The online half: routes calls through the index, bootstrapping jit entries
// on first use. A key whose plugin fails twice in a row is demoted to the
// fallback for the rest of this dispatcher's life.
class Dispatcher {
 public:
  using Fallback = std::function<TensorMap(const TensorMap&)>;

  Dispatcher(std::shared_ptr<const DispatchIndex> index, std::shared_ptr<DispatchBackend> backend,
             bool enabled = apply_enabled_from_env());

  TensorMap apply(std::string_view definition, const TensorMap& inputs,
                  const std::map<std::string, int64_t>& axes, const Fallback& fallback);

  bool enabled() const { return enabled_; }
  DispatchStats stats() const;
  bool demoted(const DispatchKey& key) const;
  // Solutions whose eager bootstrap failed; they retry lazily.
  const std::vector<std::string>& aot_failures() const { return aot_failures_; }

 private:
  bool ensure_bootstrapped(const std::string& solution);
  uint64_t key_id(const DispatchKey& key) const;

  std::shared_ptr<const DispatchIndex> index_;
  std::shared_ptr<DispatchBackend> backend_;
  const bool enabled_;

  struct BootState {
    std::atomic<bool> booted{false};
    std::mutex gate;  // held by the one caller running the bootstrap
  };
  // One per indexed solution, created up front so lookups need no lock.
  std::unordered_map<std::string, std::unique_ptr<BootState>> boot_;
  std::vector<std::string> aot_failures_;

  mutable std::mutex demote_mu_;
  std::unordered_set<uint64_t> demoted_;
  std::atomic<std::size_t> demoted_count_{0};

  std::atomic<uint64_t> calls_{0}, probes_{0}, routed_{0}, fallbacks_{0}, bootstraps_{0},
      failures_{0}, demotions_{0};
};

}  // namespace fib

#endif  // FIB_DISPATCH_H_
