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

#include "fib/validators.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fib/error.h"
#include "fib/reference.h"
#include "fib/rng.h"

namespace fib {

namespace {

constexpr double kRelativeFloor = 1e-12;

struct ElementStats {
  int64_t total = 0;
  int64_t within = 0;
  int64_t non_finite = 0;
  double max_abs = 0.0;
  double max_rel = 0.0;
};

ElementStats compare(const Tensor& y_sol, const Tensor& y_ref, const Tolerance& tol) {
  if (y_sol.shape() != y_ref.shape() || y_sol.dtype() != y_ref.dtype()) {
    throw Error(ErrorCode::kShapeMismatch,
                "cannot compare " + std::string(dtype_name(y_sol.dtype())) +
                    shape_to_string(y_sol.shape()) + " with " +
                    std::string(dtype_name(y_ref.dtype())) + shape_to_string(y_ref.shape()));
  }
  ElementStats s;
  s.total = y_sol.numel();
  for (int64_t i = 0; i < s.total; ++i) {
    const double sol = y_sol.value(i);
    const double ref = y_ref.value(i);
    // Non-finite output is rejected unless the reference holds the very same
    // infinity there (lse = -inf for an empty attention row).
    if (!std::isfinite(sol) && sol != ref) {
      ++s.non_finite;
      continue;
    }
    const double abs_err = (sol == ref) ? 0.0 : std::fabs(sol - ref);
    if (std::isfinite(abs_err) && abs_err <= tol.eps_abs + tol.eps_rel * std::fabs(ref)) {
      ++s.within;
    }
    if (std::isfinite(abs_err)) {
      s.max_abs = std::max(s.max_abs, abs_err);
      s.max_rel = std::max(s.max_rel, abs_err / std::max(std::fabs(ref), kRelativeFloor));
    } else {
      s.max_abs = s.max_rel = std::numeric_limits<double>::infinity();
    }
  }
  return s;
}

ValidationVerdict verdict_from(const ElementStats& s, bool passed, const std::string& why) {
  ValidationVerdict v;
  v.passed = passed;
  v.max_absolute_error = s.max_abs;
  v.max_relative_error = s.max_rel;
  v.failing_fraction =
      s.total == 0 ? 0.0
                   : static_cast<double>(s.total - s.within) / static_cast<double>(s.total);
  v.detail = why;
  return v;
}

}  // namespace

Tolerance default_tolerance(DType dtype) {
  switch (dtype) {
    case DType::kF32: return {1e-5, 1e-5};
    case DType::kF16: return {1e-3, 1e-3};
    case DType::kBF16: return {1e-2, 1e-2};
    case DType::kF8E4M3: return {1e-3, 1e-3};
    default: return {0.0, 0.0};
  }
}

ValidationVerdict check_deterministic(const Tensor& y_sol, const Tensor& y_ref,
                                      const Tolerance& tol) {
  const ElementStats s = compare(y_sol, y_ref, tol);
  if (s.non_finite > 0) {
    return verdict_from(s, false,
                        std::to_string(s.non_finite) + " non-finite output element(s)");
  }
  const bool ok = s.within == s.total;
  return verdict_from(s, ok,
                      ok ? std::string()
                         : std::to_string(s.total - s.within) + " of " +
                               std::to_string(s.total) + " elements out of tolerance");
}

ValidationVerdict check_matched_ratio(const Tensor& y_sol, const Tensor& y_ref,
                                      const Tolerance& tol, double rho) {
  const ElementStats s = compare(y_sol, y_ref, tol);
  if (s.non_finite > 0) {
    return verdict_from(s, false,
                        std::to_string(s.non_finite) + " non-finite output element(s)");
  }
  // Slack keeps rho * total from rounding above an exact count.
  const bool ok = s.total == 0 ||
                  static_cast<double>(s.within) >= rho * static_cast<double>(s.total) - 1e-9;
  return verdict_from(s, ok,
                      ok ? std::string()
                         : "only " + std::to_string(s.within) + " of " +
                               std::to_string(s.total) + " elements within tolerance");
}

double tvd(std::span<const double> q, std::span<const double> f_hat) {
  if (q.size() != f_hat.size()) {
    throw Error(ErrorCode::kLengthMismatch, "distributions have lengths " +
                                                std::to_string(q.size()) + " and " +
                                                std::to_string(f_hat.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sum += std::fabs(q[i] - f_hat[i]);
  return 0.5 * sum;
}

ValidationVerdict check_stochastic(const Sampler& sample_fn, std::span<const double> p,
                                   std::optional<int64_t> top_k,
                                   std::optional<double> top_p,
                                   const StochasticConfig& cfg, int64_t chunk) {
  const SamplingTarget target = derive_sampling_target(p, top_k, top_p);
  std::vector<double> counts(p.size(), 0.0);
  int64_t drawn = 0;
  uint64_t call = 0;
  ValidationVerdict v;
  while (drawn < cfg.trials) {
    const int64_t want = std::min(chunk, cfg.trials - drawn);
    std::vector<int64_t> samples;
    try {
      samples = sample_fn(want, mix_seed(cfg.seed, call++));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kSamplerCrashed, e.what());
    }
    if (static_cast<int64_t>(samples.size()) != want) {
      throw Error(ErrorCode::kSamplerCrashed,
                  "sampler returned " + std::to_string(samples.size()) + " of " +
                      std::to_string(want) + " samples");
    }
    for (int64_t s : samples) {
      const bool in_range = s >= 0 && s < static_cast<int64_t>(p.size());
      if (!in_range || !target.mask[static_cast<std::size_t>(s)]) {
        v.passed = false;
        v.failing_fraction = 1.0;
        v.detail = "mask violation: sampled token " + std::to_string(s) +
                   " is excluded by the top-k/top-p mask (trial " +
                   std::to_string(drawn + 1) + ")";
        v.extra = {{"mask_violation", s}, {"trials", drawn + 1}};
        return v;
      }
      counts[static_cast<std::size_t>(s)] += 1.0;
      ++drawn;
    }
  }
  for (double& c : counts) c /= static_cast<double>(cfg.trials);
  const double distance = tvd(target.q, counts);
  v.passed = distance <= cfg.tau_tvd;
  v.failing_fraction = v.passed ? 0.0 : 1.0;
  v.detail = v.passed ? std::string()
                      : "tvd " + std::to_string(distance) + " exceeds " +
                            std::to_string(cfg.tau_tvd);
  v.extra = {{"trials", cfg.trials}, {"tvd", distance}};
  return v;
}

void merge_verdict(ValidationVerdict& acc, const ValidationVerdict& next) {
  acc.passed = acc.passed && next.passed;
  acc.max_absolute_error = std::max(acc.max_absolute_error, next.max_absolute_error);
  acc.max_relative_error = std::max(acc.max_relative_error, next.max_relative_error);
  acc.failing_fraction = std::max(acc.failing_fraction, next.failing_fraction);
  if (!next.detail.empty()) {
    acc.detail += acc.detail.empty() ? next.detail : "; " + next.detail;
  }
  if (!next.extra.is_null()) {
    if (acc.extra.is_null()) acc.extra = nlohmann::ordered_json::object();
    for (const auto& [k, val] : next.extra.items()) acc.extra[k] = val;
  }
}

}  // namespace fib
