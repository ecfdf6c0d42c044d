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

#ifndef FIB_REFERENCE_H_
#define FIB_REFERENCE_H_

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fib/binding.h"
#include "fib/tensor.h"
#include "fib/trace.h"

namespace fib {

// Reference evaluators. Straight loops, f32 accumulation in ascending index
// order, outputs rounded to the declared dtype at the boundary. Inputs and
// outputs bind to a Definition by position:
//   gemm                 (A[M,K], B[N,K])                         -> (C[M,N])
//   fused_add_rmsnorm    (x[B,H], residual[B,H], weight[H] [, eps]) -> (y, residual_out)
//   gqa_paged_decode     (q, k_cache, v_cache, kv_indptr, kv_indices, sm_scale)
//                                                                 -> (output, lse)
//   sampling_top_k_top_p (probs[B,V], top_k[B], top_p[B])         -> (samples[B])

// C[m, n] = sum_k A[m, k] * B[n, k].
Tensor ref_gemm(const Tensor& a, const Tensor& b, DType out_dtype = DType::kF16);

struct RmsNormOutputs {
  Tensor y;
  Tensor residual;
};

inline constexpr float kDefaultRmsNormEps = 1e-6f;

// h = x + residual; residual_out = h; y = h / sqrt(mean(h^2) + eps) * weight.
RmsNormOutputs ref_fused_add_rmsnorm(const Tensor& x, const Tensor& residual,
                                     const Tensor& weight, float eps,
                                     DType out_dtype, DType residual_dtype);

struct GqaDecodeResult {
  std::vector<float> output;  // [batch, qo_heads, head_dim]
  std::vector<float> lse;     // [batch, qo_heads], base 2
};

// Unrounded paged GQA decode with page_size 1. Rows with an empty page range
// produce zero output and lse = -inf.
GqaDecodeResult gqa_paged_decode_f32(const Tensor& q, const Tensor& k_cache,
                                     const Tensor& v_cache, const Tensor& kv_indptr,
                                     const Tensor& kv_indices, float sm_scale);

std::pair<Tensor, Tensor> ref_gqa_paged_decode(const Tensor& q, const Tensor& k_cache,
                                               const Tensor& v_cache,
                                               const Tensor& kv_indptr,
                                               const Tensor& kv_indices, float sm_scale,
                                               DType out_dtype = DType::kBF16);

struct SamplingTarget {
  std::vector<bool> mask;  // tokens a correct sampler may emit
  std::vector<double> q;   // p restricted to mask, renormalized
};

// Top-k keeps the k most probable tokens (ties go to the lower index). Top-p
// keeps the shortest prefix of tokens in descending-probability order whose
// mass reaches top_p. With both set the mask is their intersection.
SamplingTarget derive_sampling_target(std::span<const double> p,
                                      std::optional<int64_t> top_k,
                                      std::optional<double> top_p);

// Inverse-CDF draw from `q` restricted to `mask` with u in [0, 1).
int64_t sample_index(const SamplingTarget& target, double u);

// One token per row; row r draws with uniform Philox(seed).uniform(r).
Tensor ref_sampling(const Tensor& probs, const Tensor& top_k, const Tensor& top_p,
                    uint64_t seed, DType out_dtype = DType::kI32);

// Dispatches on d.op_type. Output names and dtypes follow d.outputs.
// Throws UnsupportedOpType for op types without a built-in evaluator.
TensorMap run_reference(const Definition& d, const TensorMap& inputs, uint64_t seed = 0);

struct PageTable {
  Tensor kv_indptr;   // int32 [batch + 1], kv_indptr[-1] == num_kv_indices
  Tensor kv_indices;  // int32 [num_kv_indices], sorted per row, < num_pages
};

PageTable generate_page_table(int64_t batch_size, int64_t num_kv_indices,
                              int64_t num_pages, uint64_t seed);

// Rows of softmax(N(0,1)) draws.
Tensor generate_probabilities(int64_t rows, int64_t vocab, uint64_t seed);

// Replaces randomly-specified inputs whose values carry structure (page
// tables, probability rows, top-k/top-p, softmax scale, eps) with values that
// satisfy the op's preconditions. Other inputs are left untouched.
void prepare_structured_inputs(const Definition& d, const Workload& w,
                               const BoundShapes& bound, TensorMap& inputs,
                               uint64_t seed_base);

}  // namespace fib

#endif  // FIB_REFERENCE_H_
