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

#include "fib/binding.h"

#include "fib/archive.h"
#include "fib/error.h"
#include "fib/rng.h"

namespace fib {

BoundShapes bind_workload(const Definition& d, const Workload& w) {
  BoundShapes bound;
  for (const auto& [name, value] : w.axes) {
    auto it = d.axes.find(name);
    if (it == d.axes.end()) {
      throw_schema("workload.axes." + name, "axis not declared by " + d.name);
    }
    if (it->second.kind == AxisKind::kConst) {
      throw Error(ErrorCode::kConstAxisOverridden,
                  "workload assigns const axis '" + name + "'", "workload.axes." + name);
    }
  }
  for (const auto& [name, axis] : d.axes) {
    if (axis.kind == AxisKind::kConst) {
      bound.axes.emplace(name, *axis.value);
      continue;
    }
    auto it = w.axes.find(name);
    if (it == w.axes.end()) {
      throw Error(ErrorCode::kMissingAxis, "workload does not assign var axis '" + name + "'",
                  "workload.axes." + name);
    }
    bound.axes.emplace(name, it->second);
  }
  for (const auto& [name, spec] : w.inputs) {
    if (d.find_input(name) == nullptr) {
      throw_schema("workload.inputs." + name, "not an input of " + d.name);
    }
  }
  auto resolve = [&](const TensorSpec& spec) {
    Shape shape;
    for (const auto& axis : spec.shape) shape.push_back(bound.axes.at(axis));
    return shape;
  };
  for (const auto& [name, spec] : d.inputs) {
    if (w.find_input(name) == nullptr) {
      throw_schema("workload.inputs." + name, "input is not covered by the workload");
    }
    bound.shapes.emplace(name, resolve(spec));
  }
  for (const auto& [name, spec] : d.outputs) bound.shapes.emplace(name, resolve(spec));

  const TensorMap no_tensors;
  for (const Constraint& c : d.constraints) {
    if (c.indexes_tensors()) {
      bound.deferred.push_back(c);
    } else if (!c.evaluate(bound.axes, no_tensors)) {
      throw Error(ErrorCode::kConstraintViolated, c.text());
    }
  }
  return bound;
}

void check_deferred_constraints(const BoundShapes& bound, const TensorMap& inputs) {
  for (const Constraint& c : bound.deferred) {
    if (!c.evaluate(bound.axes, inputs)) {
      throw Error(ErrorCode::kConstraintViolated, c.text());
    }
  }
}

uint64_t workload_seed_base(const Workload& w, uint64_t session_seed) {
  return mix_seed(fnv1a64(w.uuid), session_seed);
}

Tensor materialize_input(const InputSpec& spec, const Shape& shape, DType dtype,
                         uint64_t seed_base, std::string_view input_name,
                         const std::filesystem::path& base_dir) {
  switch (spec.kind) {
    case InputKind::kScalar: {
      if (!shape.empty()) {
        throw Error(ErrorCode::kShapeMismatch,
                    std::string(input_name) + ": scalar input bound to shape " +
                        shape_to_string(shape));
      }
      return Tensor::scalar(dtype, spec.value.value_or(0.0));
    }
    case InputKind::kRandom: {
      const uint64_t base = spec.seed ? static_cast<uint64_t>(*spec.seed) : seed_base;
      const Philox rng(mix_seed(base, fnv1a64(input_name)));
      const auto n = static_cast<std::size_t>(shape_numel(shape));
      if (is_float(dtype)) {
        std::vector<float> values(n);
        for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<float>(rng.normal(i));
        return Tensor::from_floats(dtype, shape, std::move(values));
      }
      std::vector<int64_t> values(n);
      for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<int64_t>(rng.bits64(i) % 8);
      return Tensor::from_ints(dtype, shape, std::move(values));
    }
    case InputKind::kArchive: {
      std::filesystem::path path = spec.path.value_or("");
      if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
      const TensorArchive archive = load_archive_file(path);
      const std::string key = spec.tensor_key.value_or(std::string(input_name));
      const Tensor* t = archive.tensors.find(key);
      if (t == nullptr) {
        throw Error(ErrorCode::kArchiveMissingKey,
                    "'" + key + "' not found in " + path.string());
      }
      if (t->dtype() != dtype) {
        throw Error(ErrorCode::kDTypeMismatch,
                    key + " is " + std::string(dtype_name(t->dtype())) + ", expected " +
                        std::string(dtype_name(dtype)));
      }
      if (t->shape() != shape) {
        throw Error(ErrorCode::kShapeMismatch,
                    key + " has shape " + shape_to_string(t->shape()) + ", expected " +
                        shape_to_string(shape));
      }
      return *t;
    }
  }
  throw Error(ErrorCode::kSchema, "unknown input kind");
}

TensorMap materialize_inputs(const Definition& d, const Workload& w,
                             const BoundShapes& bound, uint64_t seed_base,
                             const std::filesystem::path& base_dir) {
  TensorMap out;
  for (const auto& [name, spec] : d.inputs) {
    out.set(name, materialize_input(*w.find_input(name), bound.shapes.at(name), spec.dtype,
                                    seed_base, name, base_dir));
  }
  return out;
}

}  // namespace fib
