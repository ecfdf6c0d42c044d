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

#ifndef FIB_VALIDATORS_H_
#define FIB_VALIDATORS_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fib/tensor.h"
#include "json.hpp"

namespace fib {

struct Tolerance {
  double eps_abs = 1e-5;
  double eps_rel = 1e-5;
};

struct ValidationVerdict {
  bool passed = false;
  double max_absolute_error = 0.0;
  double max_relative_error = 0.0;
  double failing_fraction = 0.0;
  std::string detail;
  nlohmann::ordered_json extra;  // stochastic: {"tvd", "trials", ...}
};

struct StochasticConfig {
  int64_t trials = 20000;
  double tau_tvd = 0.02;
  uint64_t seed = 0;
};

// Default elementwise bounds per output dtype; f8e4m3 uses the f16 bounds
// under the matched-ratio rule.
Tolerance default_tolerance(DType dtype);
inline constexpr double kDefaultMatchedRatio = 0.95;

// Element passes iff |sol - ref| <= eps_abs + eps_rel * |ref|. Any non-finite
// element in `y_sol` fails the whole tensor, except an infinity that equals
// the reference element exactly. Throws ShapeMismatch when the
// tensors are not comparable (a harness bug, not a verdict).
ValidationVerdict check_deterministic(const Tensor& y_sol, const Tensor& y_ref,
                                      const Tolerance& tol);

// Passes iff the fraction of elements within bounds is >= rho and no element
// is non-finite.
ValidationVerdict check_matched_ratio(const Tensor& y_sol, const Tensor& y_ref,
                                      const Tolerance& tol, double rho);

// (1/2) * sum |q_i - f_i|. Throws LengthMismatch.
double tvd(std::span<const double> q, std::span<const double> f_hat);

// Draws `count` samples; sample i uses per-trial seed mix_seed(seed, i).
using Sampler = std::function<std::vector<int64_t>(int64_t count, uint64_t seed)>;

// Runs `cfg.trials` draws through `sample_fn` (in chunks of at most
// `chunk` samples). Any sample outside the mask fails immediately; otherwise
// passes iff tvd(q, empirical) <= cfg.tau_tvd. Sampler exceptions surface as
// Error(kSamplerCrashed).
ValidationVerdict check_stochastic(const Sampler& sample_fn, std::span<const double> p,
                                   std::optional<int64_t> top_k,
                                   std::optional<double> top_p,
                                   const StochasticConfig& cfg, int64_t chunk = 4096);

// Folds `next` into `acc`: errors are maxima, the verdict is a conjunction.
void merge_verdict(ValidationVerdict& acc, const ValidationVerdict& next);

}  // namespace fib

#endif  // FIB_VALIDATORS_H_
