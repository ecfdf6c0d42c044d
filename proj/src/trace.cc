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

#include "fib/trace.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "fib/error.h"

namespace fib {

using json = nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw_schema(path, "expected an object");
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw_schema(join(path, key), "missing required field");
  return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) throw_schema(join(path, key), "expected a string");
  return v.get<std::string>();
}

std::optional<std::string> opt_string(const json& obj, const char* key,
                                      const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw_schema(join(path, key), "expected a string");
  return it->get<std::string>();
}

int64_t as_int(const json& v, const std::string& path) {
  if (v.is_number_integer()) return v.get<int64_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::fabs(d) < 9.0e15) return static_cast<int64_t>(d);
  }
  throw_schema(path, "expected an integer");
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw_schema(path, "expected a number");
  return v.get<double>();
}

std::vector<std::string> string_list(const json& obj, const char* key,
                                     const std::string& path, bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) throw_schema(join(path, key), "missing required field");
    return {};
  }
  if (!it->is_array()) throw_schema(join(path, key), "expected an array");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < it->size(); ++i) {
    const json& item = (*it)[i];
    if (!item.is_string()) {
      throw_schema(join(path, key) + "[" + std::to_string(i) + "]",
                   "expected a string");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

// Sorts the keys of a single object level.
json sorted(json obj) {
  std::vector<std::pair<std::string, json>> items;
  for (auto& [k, v] : obj.items()) items.emplace_back(k, std::move(v));
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  json out = json::object();
  for (auto& [k, v] : items) out[k] = std::move(v);
  return out;
}

json sorted_deep(const json& j) {
  if (j.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : j.items()) out[k] = sorted_deep(v);
    return sorted(std::move(out));
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(sorted_deep(v));
    return out;
  }
  return j;
}

TensorSpec parse_tensor_spec(const json& j, const std::string& path) {
  require_object(j, path);
  TensorSpec spec;
  auto shape = j.find("shape");
  if (shape == j.end()) throw_schema(join(path, "shape"), "missing required field");
  if (!shape->is_null()) {
    if (!shape->is_array()) throw_schema(join(path, "shape"), "expected an array or null");
    spec.shape = string_list(j, "shape", path, true);
  }
  try {
    spec.dtype = parse_dtype(get_string(j, "dtype", path));
  } catch (const Error& e) {
    if (e.path().empty()) throw_schema(join(path, "dtype"), e.what());
    throw;
  }
  spec.description = opt_string(j, "description", path);
  return spec;
}

NamedTensorSpecs parse_tensor_specs(const json& obj, const char* key,
                                    const std::string& path) {
  const json& m = require(obj, key, path);
  require_object(m, join(path, key));
  NamedTensorSpecs out;
  for (const auto& [name, spec] : m.items()) {
    out.emplace_back(name, parse_tensor_spec(spec, join(join(path, key), name)));
  }
  return out;
}

json tensor_spec_to_json(const TensorSpec& spec) {
  json j = json::object();
  if (spec.description) j["description"] = *spec.description;
  j["dtype"] = dtype_name(spec.dtype);
  j["shape"] = spec.shape.empty() ? json(nullptr) : json(spec.shape);
  return sorted(std::move(j));
}

json tensor_specs_to_json(const NamedTensorSpecs& specs) {
  json j = json::object();
  for (const auto& [name, spec] : specs) j[name] = tensor_spec_to_json(spec);
  return j;
}

InputSpec parse_input_spec(const json& j, const std::string& path) {
  require_object(j, path);
  const std::string type = get_string(j, "type", path);
  InputSpec spec;
  auto reject = [&](const char* key) {
    auto it = j.find(key);
    if (it != j.end() && !it->is_null()) {
      throw_schema(join(path, key), "not allowed for input type '" + type + "'");
    }
  };
  if (type == "random") {
    spec.kind = InputKind::kRandom;
    auto it = j.find("seed");
    if (it != j.end() && !it->is_null()) spec.seed = as_int(*it, join(path, "seed"));
    reject("path");
    reject("tensor_key");
    reject("value");
  } else if (type == "safetensors" || type == "archive") {
    spec.kind = InputKind::kArchive;
    spec.path = get_string(j, "path", path);
    spec.tensor_key = get_string(j, "tensor_key", path);
    reject("seed");
    reject("value");
  } else if (type == "scalar") {
    spec.kind = InputKind::kScalar;
    spec.value = as_number(require(j, "value", path), join(path, "value"));
    reject("seed");
    reject("path");
    reject("tensor_key");
  } else {
    throw_schema(join(path, "type"), "unknown input type '" + type + "'");
  }
  return spec;
}

json input_spec_to_json(const InputSpec& spec) {
  json j = json::object();
  switch (spec.kind) {
    case InputKind::kRandom:
      if (spec.seed) j["seed"] = *spec.seed;
      j["type"] = "random";
      break;
    case InputKind::kArchive:
      j["path"] = spec.path.value_or("");
      j["tensor_key"] = spec.tensor_key.value_or("");
      j["type"] = "safetensors";
      break;
    case InputKind::kScalar:
      j["type"] = "scalar";
      j["value"] = spec.value.value_or(0.0);
      break;
  }
  return sorted(std::move(j));
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

json parse_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::exception& e) {
    throw_schema("", std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

std::optional<OpType> resolve_op_type(std::string_view op_type) {
  if (op_type == "gemm") return OpType::kGemm;
  if (op_type == "fused_add_rmsnorm") return OpType::kFusedAddRmsnorm;
  if (op_type == "gqa_paged_decode" || op_type == "gqa_paged") {
    return OpType::kGqaPagedDecode;
  }
  if (op_type == "sampling_top_k_top_p") return OpType::kSamplingTopKTopP;
  return std::nullopt;
}

const TensorSpec* Definition::find_input(std::string_view input) const {
  for (const auto& [n, s] : inputs) {
    if (n == input) return &s;
  }
  return nullptr;
}

const TensorSpec* Definition::find_output(std::string_view output) const {
  for (const auto& [n, s] : outputs) {
    if (n == output) return &s;
  }
  return nullptr;
}

std::vector<std::string> Definition::var_axes() const {
  std::vector<std::string> out;
  for (const auto& [n, a] : axes) {
    if (a.kind == AxisKind::kVar) out.push_back(n);
  }
  return out;
}

bool definitions_equivalent(const Definition& a, const Definition& b) {
  auto io_equal = [](const NamedTensorSpecs& x, const NamedTensorSpecs& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].first != y[i].first || x[i].second.shape != y[i].second.shape ||
          x[i].second.dtype != y[i].second.dtype) {
        return false;
      }
    }
    return true;
  };
  if (!io_equal(a.inputs, b.inputs) || !io_equal(a.outputs, b.outputs)) return false;
  if (a.reference != b.reference) return false;
  if (a.axes.size() != b.axes.size()) return false;
  for (const auto& [name, axis] : a.axes) {
    auto it = b.axes.find(name);
    if (it == b.axes.end() || it->second.kind != axis.kind) return false;
    if (axis.kind == AxisKind::kConst && it->second.value != axis.value) return false;
  }
  return true;
}

const InputSpec* Workload::find_input(std::string_view input) const {
  for (const auto& [n, s] : inputs) {
    if (n == input) return &s;
  }
  return nullptr;
}

std::vector<Workload> dedup_workloads(const std::vector<Workload>& workloads,
                                      const std::vector<std::string>& feature_axes) {
  std::set<std::vector<std::pair<std::string, int64_t>>> seen;
  std::vector<Workload> out;
  for (const Workload& w : workloads) {
    std::vector<std::pair<std::string, int64_t>> key;
    if (feature_axes.empty()) {
      key.assign(w.axes.begin(), w.axes.end());
    } else {
      for (const auto& axis : feature_axes) {
        auto it = w.axes.find(axis);
        key.emplace_back(axis, it == w.axes.end() ? -1 : it->second);
      }
    }
    if (seen.insert(std::move(key)).second) out.push_back(w);
  }
  return out;
}

std::string Solution::entry_file() const {
  const auto pos = entry_point.find("::");
  return pos == std::string::npos ? entry_point : entry_point.substr(0, pos);
}

std::string Solution::entry_symbol() const {
  const auto pos = entry_point.find("::");
  return pos == std::string::npos ? std::string() : entry_point.substr(pos + 2);
}

std::string_view eval_status_name(EvalStatus status) {
  switch (status) {
    case EvalStatus::kPassed: return "PASSED";
    case EvalStatus::kFailedCompile: return "FAILED_COMPILE";
    case EvalStatus::kFailedRuntime: return "FAILED_RUNTIME";
    case EvalStatus::kFailedCorrectness: return "FAILED_CORRECTNESS";
    case EvalStatus::kTimeout: return "TIMEOUT";
  }
  return "?";
}

EvalStatus parse_eval_status(std::string_view text) {
  for (EvalStatus s : {EvalStatus::kPassed, EvalStatus::kFailedCompile,
                       EvalStatus::kFailedRuntime, EvalStatus::kFailedCorrectness,
                       EvalStatus::kTimeout}) {
    if (eval_status_name(s) == text) return s;
  }
  throw_schema("evaluation.status", "unknown status '" + std::string(text) + "'");
}

void validate_definition(const Definition& d) {
  if (d.name.empty()) throw_schema("name", "must not be empty");
  if (d.outputs.empty()) throw_schema("outputs", "at least one output is required");
  for (const auto& [name, axis] : d.axes) {
    const std::string path = "axes." + name;
    if (axis.kind == AxisKind::kConst) {
      if (!axis.value) throw_schema(join(path, "value"), "const axis requires a value");
      if (*axis.value < 0) throw_schema(join(path, "value"), "must be non-negative");
    } else if (axis.value) {
      throw_schema(join(path, "value"), "var axis must not carry a value");
    }
  }
  std::set<std::string> names;
  auto check_io = [&](const NamedTensorSpecs& specs, const char* group) {
    for (const auto& [name, spec] : specs) {
      const std::string path = std::string(group) + "." + name;
      if (!names.insert(name).second) {
        throw_schema(path, "duplicate tensor name '" + name + "'");
      }
      for (const auto& axis : spec.shape) {
        if (!d.axes.count(axis)) {
          throw_schema(join(path, "shape"), "undeclared axis '" + axis + "'");
        }
      }
    }
  };
  check_io(d.inputs, "inputs");
  check_io(d.outputs, "outputs");
  for (std::size_t i = 0; i < d.constraints.size(); ++i) {
    const std::string path = "constraints[" + std::to_string(i) + "]";
    const Constraint& c = d.constraints[i];
    for (const auto& axis : c.axis_names()) {
      if (!d.axes.count(axis)) throw_schema(path, "undeclared axis '" + axis + "'");
    }
    for (const auto& tensor : c.tensor_names()) {
      const TensorSpec* spec = d.find_input(tensor);
      if (spec == nullptr) throw_schema(path, "undeclared input '" + tensor + "'");
      if (!is_integer(spec->dtype)) {
        throw_schema(path, "indexed input '" + tensor + "' is not integer-typed");
      }
    }
  }
}

Definition parse_definition(const json& doc) {
  require_object(doc, "");
  Definition d;
  d.name = get_string(doc, "name", "");
  d.description = opt_string(doc, "description", "").value_or("");
  d.op_type = get_string(doc, "op_type", "");
  d.tags = string_list(doc, "tags", "", false);
  const json& axes = require(doc, "axes", "");
  require_object(axes, "axes");
  for (const auto& [name, axis] : axes.items()) {
    const std::string path = "axes." + name;
    require_object(axis, path);
    AxisSpec spec;
    const std::string type = get_string(axis, "type", path);
    if (type == "const") {
      spec.kind = AxisKind::kConst;
    } else if (type == "var") {
      spec.kind = AxisKind::kVar;
    } else {
      throw_schema(join(path, "type"), "expected 'const' or 'var'");
    }
    auto value = axis.find("value");
    if (value != axis.end() && !value->is_null()) {
      spec.value = as_int(*value, join(path, "value"));
    }
    spec.description = opt_string(axis, "description", path);
    d.axes.emplace(name, std::move(spec));
  }
  for (const auto& text : string_list(doc, "constraints", "", false)) {
    d.constraints.push_back(Constraint::parse(text));
  }
  d.inputs = parse_tensor_specs(doc, "inputs", "");
  d.outputs = parse_tensor_specs(doc, "outputs", "");
  d.reference = get_string(doc, "reference", "");
  validate_definition(d);
  return d;
}

json definition_to_json(const Definition& d) {
  json axes = json::object();
  for (const auto& [name, axis] : d.axes) {
    json a = json::object();
    if (axis.description) a["description"] = *axis.description;
    a["type"] = axis.kind == AxisKind::kConst ? "const" : "var";
    if (axis.value) a["value"] = *axis.value;
    axes[name] = sorted(std::move(a));
  }
  json constraints = json::array();
  for (const auto& c : d.constraints) constraints.push_back(c.text());
  json j = json::object();
  j["axes"] = std::move(axes);
  if (!d.constraints.empty()) j["constraints"] = std::move(constraints);
  j["description"] = d.description;
  j["inputs"] = tensor_specs_to_json(d.inputs);
  j["name"] = d.name;
  j["op_type"] = d.op_type;
  j["outputs"] = tensor_specs_to_json(d.outputs);
  j["reference"] = d.reference;
  j["tags"] = d.tags;
  return sorted(std::move(j));
}

Solution parse_solution(const json& doc) {
  require_object(doc, "");
  Solution s;
  s.name = get_string(doc, "name", "");
  s.definition = get_string(doc, "definition", "");
  s.author = get_string(doc, "author", "");
  s.description = opt_string(doc, "description", "");
  const json& spec = require(doc, "spec", "");
  require_object(spec, "spec");
  s.language = get_string(spec, "language", "spec");
  s.target_hardware = string_list(spec, "target_hardware", "spec", false);
  s.entry_point = get_string(spec, "entry_point", "spec");
  s.dependencies = string_list(spec, "dependencies", "spec", false);
  const json& sources = require(doc, "sources", "");
  if (!sources.is_array()) throw_schema("sources", "expected an array");
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::string path = "sources[" + std::to_string(i) + "]";
    require_object(sources[i], path);
    s.sources.push_back(
        {get_string(sources[i], "path", path), get_string(sources[i], "content", path)});
  }
  if (s.entry_point.find("::") == std::string::npos || s.entry_symbol().empty()) {
    throw_schema("spec.entry_point", "expected 'file::symbol'");
  }
  const std::string file = s.entry_file();
  if (std::none_of(s.sources.begin(), s.sources.end(),
                   [&](const SourceFile& f) { return f.path == file; })) {
    throw_schema("spec.entry_point", "file '" + file + "' is not among sources");
  }
  return s;
}

json solution_to_json(const Solution& s) {
  json spec = json::object();
  spec["dependencies"] = s.dependencies;
  spec["entry_point"] = s.entry_point;
  spec["language"] = s.language;
  spec["target_hardware"] = s.target_hardware;
  json sources = json::array();
  for (const auto& f : s.sources) {
    json src = json::object();
    src["content"] = f.content;
    src["path"] = f.path;
    sources.push_back(std::move(src));
  }
  json j = json::object();
  j["author"] = s.author;
  j["definition"] = s.definition;
  if (s.description) j["description"] = *s.description;
  j["name"] = s.name;
  j["sources"] = std::move(sources);
  j["spec"] = sorted(std::move(spec));
  return sorted(std::move(j));
}

Workload parse_workload(const json& doc, const std::string& path) {
  require_object(doc, path);
  Workload w;
  w.uuid = get_string(doc, "uuid", path);
  const json& axes = require(doc, "axes", path);
  require_object(axes, join(path, "axes"));
  for (const auto& [name, value] : axes.items()) {
    const int64_t v = as_int(value, join(join(path, "axes"), name));
    if (v < 0) throw_schema(join(join(path, "axes"), name), "must be non-negative");
    w.axes.emplace(name, v);
  }
  const json& inputs = require(doc, "inputs", path);
  require_object(inputs, join(path, "inputs"));
  for (const auto& [name, spec] : inputs.items()) {
    w.inputs.emplace_back(name, parse_input_spec(spec, join(join(path, "inputs"), name)));
  }
  return w;
}

json workload_to_json(const Workload& w) {
  json axes = json::object();
  for (const auto& [name, v] : w.axes) axes[name] = v;
  json inputs = json::object();
  for (const auto& [name, spec] : w.inputs) inputs[name] = input_spec_to_json(spec);
  json j = json::object();
  j["axes"] = std::move(axes);
  j["inputs"] = std::move(inputs);
  j["uuid"] = w.uuid;
  return j;
}

Evaluation parse_evaluation(const json& doc, const std::string& path) {
  require_object(doc, path);
  Evaluation e;
  e.status = parse_eval_status(get_string(doc, "status", path));
  const json& env = require(doc, "environment", path);
  require_object(env, join(path, "environment"));
  e.environment.hardware = get_string(env, "hardware", join(path, "environment"));
  auto libs = env.find("libs");
  if (libs != env.end() && !libs->is_null()) {
    require_object(*libs, join(path, "environment.libs"));
    for (const auto& [k, v] : libs->items()) {
      if (!v.is_string()) throw_schema(join(path, "environment.libs." + k), "expected a string");
      e.environment.libs.emplace(k, v.get<std::string>());
    }
  }
  e.timestamp = get_string(doc, "timestamp", path);
  e.log = opt_string(doc, "log", path).value_or("");
  auto corr = doc.find("correctness");
  if (corr != doc.end() && !corr->is_null()) {
    const std::string cp = join(path, "correctness");
    require_object(*corr, cp);
    Correctness c;
    c.max_relative_error = as_number(require(*corr, "max_relative_error", cp),
                                     join(cp, "max_relative_error"));
    c.max_absolute_error = as_number(require(*corr, "max_absolute_error", cp),
                                     join(cp, "max_absolute_error"));
    auto extra = corr->find("extra");
    if (extra != corr->end()) c.extra = sorted_deep(*extra);
    e.correctness = std::move(c);
  }
  auto perf = doc.find("performance");
  if (perf != doc.end() && !perf->is_null()) {
    const std::string pp = join(path, "performance");
    require_object(*perf, pp);
    Performance p;
    p.latency_ms = as_number(require(*perf, "latency_ms", pp), join(pp, "latency_ms"));
    p.reference_latency_ms = as_number(require(*perf, "reference_latency_ms", pp),
                                       join(pp, "reference_latency_ms"));
    p.speedup_factor =
        as_number(require(*perf, "speedup_factor", pp), join(pp, "speedup_factor"));
    if (e.status == EvalStatus::kPassed) {
      if (!(p.latency_ms > 0.0)) throw_schema(join(pp, "latency_ms"), "must be positive");
      const double expected = p.reference_latency_ms / p.latency_ms;
      if (std::fabs(expected - p.speedup_factor) > 1e-9 * std::fabs(expected)) {
        throw_schema(join(pp, "speedup_factor"),
                     "must equal reference_latency_ms / latency_ms");
      }
    }
    e.performance = p;
  }
  return e;
}

json evaluation_to_json(const Evaluation& e) {
  json env = json::object();
  env["hardware"] = e.environment.hardware;
  json libs = json::object();
  for (const auto& [k, v] : e.environment.libs) libs[k] = v;
  env["libs"] = std::move(libs);
  json j = json::object();
  if (e.correctness) {
    json c = json::object();
    c["extra"] = sorted_deep(e.correctness->extra);
    c["max_absolute_error"] = e.correctness->max_absolute_error;
    c["max_relative_error"] = e.correctness->max_relative_error;
    j["correctness"] = std::move(c);
  } else {
    j["correctness"] = nullptr;
  }
  j["environment"] = std::move(env);
  j["log"] = e.log;
  if (e.performance) {
    json p = json::object();
    p["latency_ms"] = e.performance->latency_ms;
    p["reference_latency_ms"] = e.performance->reference_latency_ms;
    p["speedup_factor"] = e.performance->speedup_factor;
    j["performance"] = std::move(p);
  } else {
    j["performance"] = nullptr;
  }
  j["status"] = eval_status_name(e.status);
  j["timestamp"] = e.timestamp;
  return j;
}

TraceRecord parse_trace_json(const json& doc) {
  require_object(doc, "");
  TraceRecord t;
  const json& def = require(doc, "definition", "");
  if (def.is_string()) {
    t.definition = def.get<std::string>();
  } else if (def.is_object()) {
    try {
      t.inline_definition = parse_definition(def);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kSchema) throw_schema(join("definition", e.path()), e.what());
      throw;
    }
    t.definition = t.inline_definition->name;
  } else {
    throw_schema("definition", "expected a name or a definition object");
  }
  t.workload = parse_workload(require(doc, "workload", ""), "workload");
  auto sol = doc.find("solution");
  if (sol != doc.end() && !sol->is_null()) {
    if (sol->is_string()) {
      t.solution = sol->get<std::string>();
    } else if (sol->is_object()) {
      try {
        t.inline_solution = parse_solution(*sol);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kSchema) throw_schema(join("solution", e.path()), e.what());
        throw;
      }
      t.solution = t.inline_solution->name;
    } else {
      throw_schema("solution", "expected null, a name or a solution object");
    }
  }
  auto eval = doc.find("evaluation");
  if (eval != doc.end() && !eval->is_null()) {
    if (!t.solution) throw_schema("evaluation", "an evaluation requires a solution");
    t.evaluation = parse_evaluation(*eval, "evaluation");
  }
  return t;
}

json trace_to_json(const TraceRecord& t) {
  json j = json::object();
  j["definition"] =
      t.inline_definition ? definition_to_json(*t.inline_definition) : json(t.definition);
  j["evaluation"] = t.evaluation ? evaluation_to_json(*t.evaluation) : json(nullptr);
  if (t.inline_solution) {
    j["solution"] = solution_to_json(*t.inline_solution);
  } else if (t.solution) {
    j["solution"] = *t.solution;
  } else {
    j["solution"] = nullptr;
  }
  j["workload"] = workload_to_json(t.workload);
  return j;
}

TraceRecord parse_trace(std::string_view text) { return parse_trace_json(parse_text(text)); }

Definition parse_definition_text(std::string_view text) {
  return parse_definition(parse_text(text));
}

Solution parse_solution_text(std::string_view text) {
  return parse_solution(parse_text(text));
}

std::string serialize_trace(const TraceRecord& t) { return dump(trace_to_json(t)); }
std::string serialize_definition(const Definition& d) { return dump(definition_to_json(d)); }
std::string serialize_solution(const Solution& s) { return dump(solution_to_json(s)); }

}  // namespace fib
