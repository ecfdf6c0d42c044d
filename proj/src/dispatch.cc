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

#include "fib/dispatch.h"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <tuple>

#include "fib/error.h"
#include "fib/rng.h"

namespace fib {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kIndexVersion = 1;

uint64_t fingerprint(std::string_view definition, const std::vector<int64_t>& buckets) {
  uint64_t h = fnv1a64(definition);
  for (int64_t b : buckets) {
    h = fnv1a64({reinterpret_cast<const char*>(&b), sizeof b}, h);
  }
  return h;
}

std::string_view bootstrap_name(BootstrapMode m) { return m == BootstrapMode::kAot ? "aot" : "jit"; }

}  // namespace

int64_t bucket_pow2(int64_t value) {
  if (value <= 1) return std::max<int64_t>(value, 0);
  return static_cast<int64_t>(std::bit_ceil(static_cast<uint64_t>(value)));
}

bool apply_enabled_from_env() {
  const char* v = std::getenv("FIB_ENABLE_APPLY");
  return v != nullptr && std::string_view(v) == "1";
}

// --- index -------------------------------------------------------------------

std::optional<DispatchKey> DispatchIndex::make_key(
    std::string_view definition, const std::map<std::string, int64_t>& axes) const {
  auto f = features_.find(definition);
  if (f == features_.end()) return std::nullopt;
  DispatchKey key;
  key.definition = f->first;
  key.buckets.reserve(f->second.size());
  for (const std::string& axis : f->second) {
    auto it = axes.find(axis);
    if (it == axes.end()) return std::nullopt;
    key.buckets.push_back(bucket_pow2(it->second));
  }
  return key;
}

const IndexEntry* DispatchIndex::find(const DispatchKey& key) const {
  auto it = table_.find(fingerprint(key.definition, key.buckets));
  if (it == table_.end()) return nullptr;
  for (const IndexEntry& e : it->second) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

const IndexEntry* DispatchIndex::probe(std::string_view definition,
                                       const std::map<std::string, int64_t>& axes,
                                       bool* keyed) const {
  *keyed = false;
  auto f = features_.find(definition);
  if (f == features_.end()) return nullptr;
  constexpr std::size_t kInline = 8;
  const std::vector<std::string>& names = f->second;
  if (names.size() > kInline) {
    const std::optional<DispatchKey> key = make_key(definition, axes);
    *keyed = key.has_value();
    return key ? find(*key) : nullptr;
  }
  std::array<int64_t, kInline> buckets{};
  uint64_t h = fnv1a64(definition);
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = axes.find(names[i]);
    if (it == axes.end()) return nullptr;
    buckets[i] = bucket_pow2(it->second);
    h = fnv1a64({reinterpret_cast<const char*>(&buckets[i]), sizeof buckets[i]}, h);
  }
  *keyed = true;
  auto it = table_.find(h);
  if (it == table_.end()) return nullptr;
  for (const IndexEntry& e : it->second) {
    if (e.key.definition == definition &&
        std::equal(e.key.buckets.begin(), e.key.buckets.end(), buckets.begin(),
                   buckets.begin() + static_cast<std::ptrdiff_t>(names.size()))) {
      return &e;
    }
  }
  return nullptr;
}

const IndexEntry* DispatchIndex::lookup(std::string_view definition,
                                        const std::map<std::string, int64_t>& axes) const {
  const std::optional<DispatchKey> key = make_key(definition, axes);
  return key ? find(*key) : nullptr;
}

void DispatchIndex::insert(IndexEntry e) {
  table_[fingerprint(e.key.definition, e.key.buckets)].push_back(std::move(e));
  ++size_;
}

std::vector<IndexEntry> DispatchIndex::entries() const {
  std::vector<IndexEntry> out;
  for (const auto& [h, bucket] : table_) out.insert(out.end(), bucket.begin(), bucket.end());
  std::sort(out.begin(), out.end(), [](const IndexEntry& a, const IndexEntry& b) {
    return std::tie(a.key.definition, a.key.buckets) < std::tie(b.key.definition, b.key.buckets);
  });
  return out;
}

bool DispatchIndex::operator==(const DispatchIndex& o) const {
  return features_ == o.features_ && entries() == o.entries() &&
         error_threshold_ == o.error_threshold_ && aot_ratio_ == o.aot_ratio_ &&
         dataset_hash_ == o.dataset_hash_;
}

json DispatchIndex::to_json() const {
  json doc;
  doc["version"] = kIndexVersion;
  doc["error_threshold"] = error_threshold_;
  doc["aot_ratio"] = aot_ratio_;
  doc["dataset_hash"] = dataset_hash_;
  doc["feature_axes"] = json::object();
  for (const auto& [def, axes] : features_) doc["feature_axes"][def] = axes;
  doc["entries"] = json::array();
  for (const IndexEntry& e : entries()) {
    json entry;
    entry["definition"] = e.key.definition;
    entry["buckets"] = e.key.buckets;
    entry["solution"] = e.solution;
    entry["latency_ms"] = e.latency_ms;
    entry["bootstrap"] = bootstrap_name(e.bootstrap);
    doc["entries"].push_back(std::move(entry));
  }
  return doc;
}

DispatchIndex DispatchIndex::from_json(const json& doc) {
  DispatchIndex idx;
  try {
    if (doc.at("version").get<int>() != kIndexVersion) {
      throw Error(ErrorCode::kSchema, "unsupported index version", "version");
    }
    idx.error_threshold_ = doc.at("error_threshold").get<double>();
    idx.aot_ratio_ = doc.at("aot_ratio").get<double>();
    idx.dataset_hash_ = doc.at("dataset_hash").get<std::string>();
    for (const auto& [def, axes] : doc.at("feature_axes").items()) {
      idx.features_[def] = axes.get<std::vector<std::string>>();
    }
    for (const json& e : doc.at("entries")) {
      IndexEntry entry;
      entry.key.definition = e.at("definition").get<std::string>();
      entry.key.buckets = e.at("buckets").get<std::vector<int64_t>>();
      entry.solution = e.at("solution").get<std::string>();
      entry.latency_ms = e.at("latency_ms").get<double>();
      const std::string mode = e.at("bootstrap").get<std::string>();
      if (mode != "aot" && mode != "jit") {
        throw Error(ErrorCode::kSchema, "bootstrap must be aot or jit", "entries.bootstrap");
      }
      entry.bootstrap = mode == "aot" ? BootstrapMode::kAot : BootstrapMode::kJit;
      auto f = idx.features_.find(entry.key.definition);
      if (f == idx.features_.end() || f->second.size() != entry.key.buckets.size()) {
        throw Error(ErrorCode::kSchema, "entry does not match feature axes", "entries");
      }
      idx.insert(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchema, std::string("malformed dispatch index: ") + e.what());
  }
  return idx;
}

void DispatchIndex::save(const fs::path& path) const {
  std::ofstream of(path, std::ios::binary | std::ios::trunc);
  of << to_json().dump(2) << "\n";
  if (!of) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

DispatchIndex DispatchIndex::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(json::parse(ss.str()));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kSchema, std::string("malformed dispatch index: ") + e.what());
  }
}

DispatchIndex build_index(const std::vector<TraceRecord>& traces,
                          const std::map<std::string, Definition>& definitions,
                          const ApplyConfig& cfg) {
  if (!(cfg.aot_ratio >= 0.0 && cfg.aot_ratio <= 1.0)) {
    throw Error(ErrorCode::kSchema, "aot_ratio must be in [0, 1]");
  }
  DispatchIndex idx;
  idx.error_threshold_ = cfg.error_threshold;
  idx.aot_ratio_ = cfg.aot_ratio;

  // Order-independent content hash of the evaluated records.
  std::vector<std::string> docs;
  for (const TraceRecord& t : traces) {
    if (t.evaluation) docs.push_back(serialize_trace(t));
  }
  std::sort(docs.begin(), docs.end());
  uint64_t h = fnv1a64("");
  for (const std::string& d : docs) h = fnv1a64(d, h);
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  idx.dataset_hash_ = hex;

  struct Tally {
    double latency_sum = 0.0;
    int count = 0;
    bool rejected = false;
  };
  // key -> solution -> tally
  std::map<std::pair<std::string, std::vector<int64_t>>, std::map<std::string, Tally>> groups;
  for (const TraceRecord& t : traces) {
    if (!t.evaluation || !t.solution) continue;
    auto d = definitions.find(t.definition);
    if (d == definitions.end()) continue;
    if (!idx.features_.count(t.definition)) {
      auto custom = cfg.feature_axes.find(t.definition);
      idx.features_[t.definition] =
          custom != cfg.feature_axes.end() ? custom->second : d->second.var_axes();
    }
    const std::optional<DispatchKey> key = idx.make_key(t.definition, t.workload.axes);
    if (!key) continue;
    const Evaluation& e = *t.evaluation;
    Tally& tally = groups[{key->definition, key->buckets}][*t.solution];
    const bool ok = e.status == EvalStatus::kPassed && e.performance &&
                    std::isfinite(e.performance->latency_ms) &&
                    (!e.correctness || e.correctness->max_relative_error <= cfg.error_threshold);
    if (!ok) {
      tally.rejected = true;
      continue;
    }
    tally.latency_sum += e.performance->latency_ms;
    ++tally.count;
  }

  std::vector<IndexEntry> chosen;
  std::map<std::string, int> selections;
  for (const auto& [key, by_solution] : groups) {
    const std::string* best = nullptr;
    double best_latency = 0.0;
    for (const auto& [name, tally] : by_solution) {
      if (tally.rejected || tally.count == 0) continue;
      const double latency = tally.latency_sum / tally.count;
      if (best == nullptr || latency < best_latency) {
        best = &name;
        best_latency = latency;
      }
    }
    if (best == nullptr) continue;
    chosen.push_back({{key.first, key.second}, *best, best_latency, BootstrapMode::kJit});
    ++selections[*best];
  }
  // "Compile the one chosen the most": rank by selection count.
  std::vector<std::pair<std::string, int>> ranked(selections.begin(), selections.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const auto aot_count =
      static_cast<std::size_t>(std::ceil(cfg.aot_ratio * static_cast<double>(ranked.size()) - 1e-9));
  std::set<std::string> aot;
  for (std::size_t i = 0; i < aot_count && i < ranked.size(); ++i) aot.insert(ranked[i].first);
  for (IndexEntry& e : chosen) {
    if (aot.count(e.solution)) e.bootstrap = BootstrapMode::kAot;
    idx.insert(std::move(e));
  }
  return idx;
}

// --- backends ----------------------------------------------------------------

void InProcessBackend::bootstrap(const std::string& solution) {
  if (!kernels_.count(solution)) {
    throw Error(ErrorCode::kUnboundName, "no in-process kernel for " + solution);
  }
}

TensorMap InProcessBackend::run(const std::string& solution, const std::string&,
                                const TensorMap& inputs, const std::map<std::string, int64_t>&) {
  auto it = kernels_.find(solution);
  if (it == kernels_.end()) {
    throw Error(ErrorCode::kUnboundName, "no in-process kernel for " + solution);
  }
  return it->second(inputs);
}

PluginBackend::PluginBackend(Engine& engine, Worker& worker,
                             std::map<std::string, Solution> solutions)
    : engine_(engine), worker_(worker), solutions_(std::move(solutions)) {}

const Solution& PluginBackend::find(const std::string& solution) const {
  auto it = solutions_.find(solution);
  if (it == solutions_.end()) throw Error(ErrorCode::kUnboundName, "unknown solution " + solution);
  return it->second;
}

void PluginBackend::bootstrap(const std::string& solution) {
  const ExecResult r = engine_.bootstrap(find(solution), worker_);
  if (r.status != ExecStatus::kOk) throw Error(ErrorCode::kProtocol, r.detail);
}

TensorMap PluginBackend::run(const std::string& solution, const std::string&,
                             const TensorMap& inputs, const std::map<std::string, int64_t>& axes) {
  const Solution& s = find(solution);
  RunRequest req;
  req.inputs = inputs;
  req.entry_point = s.entry_point;
  req.axes = axes;
  ExecResult r = engine_.execute_solution(s, req, ExecMode::kPersistent, worker_);
  if (r.status != ExecStatus::kOk) {
    throw Error(ErrorCode::kProtocol, "plugin " + solution + " failed: " + r.detail);
  }
  return std::move(r.outputs);
}

// --- online dispatch -----------------------------------------------------------

Dispatcher::Dispatcher(std::shared_ptr<const DispatchIndex> index,
                       std::shared_ptr<DispatchBackend> backend, bool enabled)
    : index_(std::move(index)), backend_(std::move(backend)), enabled_(enabled) {
  if (!enabled_) return;
  std::set<std::string> aot;
  for (const IndexEntry& e : index_->entries()) {
    if (!boot_.count(e.solution)) boot_.emplace(e.solution, std::make_unique<BootState>());
    if (e.bootstrap == BootstrapMode::kAot) aot.insert(e.solution);
  }
  for (const std::string& s : aot) {
    if (!ensure_bootstrapped(s)) aot_failures_.push_back(s);
  }
}

bool Dispatcher::ensure_bootstrapped(const std::string& solution) {
  BootState& st = *boot_.at(solution);
  if (st.booted.load(std::memory_order_acquire)) return true;
  // Concurrent callers queue on the gate; only the first bootstraps.
  std::lock_guard<std::mutex> once(st.gate);
  if (st.booted.load(std::memory_order_acquire)) return true;
  try {
    backend_->bootstrap(solution);
  } catch (const std::exception&) {
    return false;  // a later call tries again
  }
  bootstraps_.fetch_add(1, std::memory_order_relaxed);
  st.booted.store(true, std::memory_order_release);
  return true;
}

uint64_t Dispatcher::key_id(const DispatchKey& key) const {
  return fingerprint(key.definition, key.buckets);
}

bool Dispatcher::demoted(const DispatchKey& key) const {
  std::lock_guard<std::mutex> g(demote_mu_);
  return demoted_.count(key_id(key)) != 0;
}

TensorMap Dispatcher::apply(std::string_view definition, const TensorMap& inputs,
                            const std::map<std::string, int64_t>& axes, const Fallback& fallback) {
  calls_.fetch_add(1, std::memory_order_relaxed);
  if (!enabled_) {
    fallbacks_.fetch_add(1, std::memory_order_relaxed);
    return fallback(inputs);
  }
  bool keyed = false;
  const IndexEntry* entry = index_->probe(definition, axes, &keyed);
  if (keyed) probes_.fetch_add(1, std::memory_order_relaxed);
  if (entry != nullptr && demoted_count_.load(std::memory_order_acquire) != 0 &&
      demoted(entry->key)) {
    entry = nullptr;
  }
  if (entry == nullptr) {
    fallbacks_.fetch_add(1, std::memory_order_relaxed);
    return fallback(inputs);
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    if (!ensure_bootstrapped(entry->solution)) {
      failures_.fetch_add(1, std::memory_order_relaxed);
      continue;
    }
    try {
      TensorMap out = backend_->run(entry->solution, entry->key.definition, inputs, axes);
      routed_.fetch_add(1, std::memory_order_relaxed);
      return out;
    } catch (const std::exception&) {
      failures_.fetch_add(1, std::memory_order_relaxed);
    }
  }
  {
    std::lock_guard<std::mutex> g(demote_mu_);
    if (demoted_.insert(key_id(entry->key)).second) {
      demoted_count_.fetch_add(1, std::memory_order_release);
      demotions_.fetch_add(1, std::memory_order_relaxed);
    }
  }
  fallbacks_.fetch_add(1, std::memory_order_relaxed);
  return fallback(inputs);
}

DispatchStats Dispatcher::stats() const {
  DispatchStats s;
  s.calls = calls_.load();
  s.probes = probes_.load();
  s.routed = routed_.load();
  s.fallbacks = fallbacks_.load();
  s.bootstraps = bootstraps_.load();
  s.failures = failures_.load();
  s.demotions = demotions_.load();
  return s;
}

}  // namespace fib
