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

#ifndef FIB_TRACE_H_
#define FIB_TRACE_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "fib/constraint.h"
#include "fib/dtype.h"
#include "json.hpp"

namespace fib {

enum class AxisKind { kConst, kVar };

struct AxisSpec {
  AxisKind kind = AxisKind::kVar;
  std::optional<int64_t> value;  // present iff kConst
  std::optional<std::string> description;
  bool operator==(const AxisSpec&) const = default;
};

struct TensorSpec {
  std::vector<std::string> shape;  // empty for scalars
  DType dtype = DType::kF32;
  std::optional<std::string> description;
  bool operator==(const TensorSpec&) const = default;
};

using NamedTensorSpecs = std::vector<std::pair<std::string, TensorSpec>>;

enum class OpType { kGemm, kFusedAddRmsnorm, kGqaPagedDecode, kSamplingTopKTopP };

// Maps an op_type string to a built-in evaluator family. "gqa_paged" is
// accepted as a synonym for "gqa_paged_decode".
std::optional<OpType> resolve_op_type(std::string_view op_type);

struct Definition {
  std::string name;
  std::string description;
  std::string op_type;
  std::vector<std::string> tags;
  std::map<std::string, AxisSpec> axes;
  std::vector<Constraint> constraints;
  NamedTensorSpecs inputs;
  NamedTensorSpecs outputs;
  std::string reference;

  const TensorSpec* find_input(std::string_view input) const;
  const TensorSpec* find_output(std::string_view output) const;
  std::vector<std::string> var_axes() const;

  bool operator==(const Definition&) const = default;
};

// Two definitions describe the same kernel task iff they share I/O specs and
// reference text, expose the same axes with the same const/var roles, and agree
// on every const value. Names, descriptions, tags and axis descriptions are
// ignored.
bool definitions_equivalent(const Definition& a, const Definition& b);

enum class InputKind { kRandom, kArchive, kScalar };

struct InputSpec {
  InputKind kind = InputKind::kRandom;
  std::optional<int64_t> seed;         // random
  std::optional<std::string> path;     // archive
  std::optional<std::string> tensor_key;
  std::optional<double> value;         // scalar
  bool operator==(const InputSpec&) const = default;
};

struct Workload {
  std::string uuid;
  std::map<std::string, int64_t> axes;
  std::vector<std::pair<std::string, InputSpec>> inputs;

  const InputSpec* find_input(std::string_view input) const;
  bool operator==(const Workload&) const = default;
};

// Keeps the first workload for every distinct assignment of `feature_axes`
// (all axes when empty); input order is preserved.
std::vector<Workload> dedup_workloads(const std::vector<Workload>& workloads,
                                      const std::vector<std::string>& feature_axes = {});

struct SourceFile {
  std::string path;
  std::string content;
  bool operator==(const SourceFile&) const = default;
};

struct Solution {
  std::string name;
  std::string definition;
  std::string author;
  std::optional<std::string> description;
  std::string language;
  std::vector<std::string> target_hardware;
  std::string entry_point;  // "file::symbol"
  std::vector<std::string> dependencies;
  std::vector<SourceFile> sources;

  std::string entry_file() const;
  std::string entry_symbol() const;
  bool operator==(const Solution&) const = default;
};

enum class EvalStatus {
  kPassed,
  kFailedCompile,
  kFailedRuntime,
  kFailedCorrectness,
  kTimeout,
};

std::string_view eval_status_name(EvalStatus status);
EvalStatus parse_eval_status(std::string_view text);

struct Environment {
  std::string hardware;
  std::map<std::string, std::string> libs;
  bool operator==(const Environment&) const = default;
};

struct Correctness {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  nlohmann::ordered_json extra;  // null when absent
  bool operator==(const Correctness&) const = default;
};

struct Performance {
  double latency_ms = 0.0;
  double reference_latency_ms = 0.0;
  double speedup_factor = 0.0;
  bool operator==(const Performance&) const = default;
};

// Records are values; the dataset only ever appends new ones.
struct Evaluation {
  EvalStatus status = EvalStatus::kFailedRuntime;
  Environment environment;
  std::string timestamp;
  std::string log;
  std::optional<Correctness> correctness;
  std::optional<Performance> performance;
  bool operator==(const Evaluation&) const = default;
};

struct TraceRecord {
  std::string definition;  // by name; also set when inlined
  std::optional<Definition> inline_definition;
  Workload workload;
  std::optional<std::string> solution;  // by name
  std::optional<Solution> inline_solution;
  std::optional<Evaluation> evaluation;
  bool operator==(const TraceRecord&) const = default;
};

// --- JSON documents -------------------------------------------------------

Definition parse_definition(const nlohmann::ordered_json& doc);
Solution parse_solution(const nlohmann::ordered_json& doc);
Workload parse_workload(const nlohmann::ordered_json& doc,
                        const std::string& path = "workload");
Evaluation parse_evaluation(const nlohmann::ordered_json& doc,
                            const std::string& path = "evaluation");
TraceRecord parse_trace_json(const nlohmann::ordered_json& doc);

// Parses and validates one trace document (text form). Throws Error(kSchema)
// with a dotted field path, or Error(kConstraintGrammar).
TraceRecord parse_trace(std::string_view text);
Definition parse_definition_text(std::string_view text);
Solution parse_solution_text(std::string_view text);

// Canonical form: keys sorted, except tensor name maps ("inputs"/"outputs")
// which keep declaration order.
nlohmann::ordered_json definition_to_json(const Definition& d);
nlohmann::ordered_json solution_to_json(const Solution& s);
nlohmann::ordered_json workload_to_json(const Workload& w);
nlohmann::ordered_json evaluation_to_json(const Evaluation& e);
nlohmann::ordered_json trace_to_json(const TraceRecord& t);

std::string serialize_trace(const TraceRecord& t);
std::string serialize_definition(const Definition& d);
std::string serialize_solution(const Solution& s);

// Structural checks that need only the definition itself.
void validate_definition(const Definition& d);

}  // namespace fib

#endif  // FIB_TRACE_H_
