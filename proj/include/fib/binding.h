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

#ifndef FIB_BINDING_H_
#define FIB_BINDING_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fib/constraint.h"
#include "fib/tensor.h"
#include "fib/trace.h"

namespace fib {

struct BoundShapes {
  AxisValues axes;                      // every axis, const and var
  std::map<std::string, Shape> shapes;  // every input and output
  // Constraints that index input tensors; checked after materialization.
  std::vector<Constraint> deferred;
};

// Resolves all axes of `d` from its const values and the workload's var
// assignments, then checks every axis-only constraint.
// Errors: MissingAxis, ConstAxisOverridden, ConstraintViolated, Schema (unknown
// axis or input, uncovered input).
BoundShapes bind_workload(const Definition& d, const Workload& w);

// Throws ConstraintViolated when a deferred constraint fails on `inputs`.
void check_deferred_constraints(const BoundShapes& bound, const TensorMap& inputs);

// Seed for a workload's random inputs: explicit per-input seeds win, otherwise
// hash(uuid) mixed with the session seed.
uint64_t workload_seed_base(const Workload& w, uint64_t session_seed = 0);

// Random float inputs draw N(0, 1); random integer inputs draw uniformly from
// [0, 8). Both come from a Philox stream keyed by (seed_base, input_name).
// Archive paths are resolved relative to `base_dir` when not absolute.
Tensor materialize_input(const InputSpec& spec, const Shape& shape, DType dtype,
                         uint64_t seed_base, std::string_view input_name,
                         const std::filesystem::path& base_dir = {});

TensorMap materialize_inputs(const Definition& d, const Workload& w,
                             const BoundShapes& bound, uint64_t seed_base,
                             const std::filesystem::path& base_dir = {});

}  // namespace fib

#endif  // FIB_BINDING_H_
