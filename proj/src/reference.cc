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

#include "fib/reference.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fib/error.h"
#include "fib/rng.h"

namespace fib {

namespace {

[[noreturn]] void shape_error(const std::string& what) {
  throw Error(ErrorCode::kShapeMismatch, what);
}

void expect_rank(const Tensor& t, std::size_t rank, const char* name) {
  if (t.shape().size() != rank) {
    shape_error(std::string(name) + " must have rank " + std::to_string(rank) +
                ", got " + shape_to_string(t.shape()));
  }
}

void expect_float(const Tensor& t, const char* name) {
  if (!is_float(t.dtype())) {
    throw Error(ErrorCode::kDTypeMismatch, std::string(name) + " must be a float tensor");
  }
}

void expect_int(const Tensor& t, const char* name) {
  if (!is_integer(t.dtype())) {
    throw Error(ErrorCode::kDTypeMismatch, std::string(name) + " must be an integer tensor");
  }
}

}  // namespace

Tensor ref_gemm(const Tensor& a, const Tensor& b, DType out_dtype) {
  expect_rank(a, 2, "A");
  expect_rank(b, 2, "B");
  expect_float(a, "A");
  expect_float(b, "B");
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    shape_error("A " + shape_to_string(a.shape()) + " and B " +
                shape_to_string(b.shape()) + " disagree on K");
  }
  const auto av = a.floats();
  const auto bv = b.floats();
  std::vector<float> c(static_cast<std::size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t kk = 0; kk < k; ++kk) acc += av[i * k + kk] * bv[j * k + kk];
      c[i * n + j] = acc;
    }
  }
  return Tensor::from_floats(out_dtype, {m, n}, std::move(c));
}

RmsNormOutputs ref_fused_add_rmsnorm(const Tensor& x, const Tensor& residual,
                                     const Tensor& weight, float eps,
                                     DType out_dtype, DType residual_dtype) {
  expect_rank(x, 2, "x");
  expect_float(x, "x");
  expect_float(residual, "residual");
  expect_float(weight, "weight");
  if (residual.shape() != x.shape()) shape_error("residual shape differs from x");
  const int64_t rows = x.shape()[0], hidden = x.shape()[1];
  if (weight.shape() != Shape{hidden}) shape_error("weight must have shape [hidden]");
  const auto xv = x.floats(), rv = residual.floats(), wv = weight.floats();
  std::vector<float> h(xv.size()), y(xv.size());
  for (int64_t r = 0; r < rows; ++r) {
    float sum_sq = 0.0f;
    for (int64_t i = 0; i < hidden; ++i) {
      const std::size_t at = static_cast<std::size_t>(r * hidden + i);
      h[at] = xv[at] + rv[at];
      sum_sq += h[at] * h[at];
    }
    const float inv_rms =
        1.0f / std::sqrt(sum_sq / static_cast<float>(hidden) + eps);
    for (int64_t i = 0; i < hidden; ++i) {
      const std::size_t at = static_cast<std::size_t>(r * hidden + i);
      y[at] = h[at] * inv_rms * wv[static_cast<std::size_t>(i)];
    }
  }
  return {Tensor::from_floats(out_dtype, x.shape(), std::move(y)),
          Tensor::from_floats(residual_dtype, x.shape(), std::move(h))};
}

GqaDecodeResult gqa_paged_decode_f32(const Tensor& q, const Tensor& k_cache,
                                     const Tensor& v_cache, const Tensor& kv_indptr,
                                     const Tensor& kv_indices, float sm_scale) {
  expect_rank(q, 3, "q");
  expect_rank(k_cache, 4, "k_cache");
  expect_float(q, "q");
  expect_float(k_cache, "k_cache");
  expect_float(v_cache, "v_cache");
  expect_int(kv_indptr, "kv_indptr");
  expect_int(kv_indices, "kv_indices");
  if (v_cache.shape() != k_cache.shape()) shape_error("v_cache shape differs from k_cache");
  const int64_t batch = q.shape()[0], qo_heads = q.shape()[1], dim = q.shape()[2];
  const int64_t pages = k_cache.shape()[0], page_size = k_cache.shape()[1];
  const int64_t kv_heads = k_cache.shape()[2];
  if (k_cache.shape()[3] != dim) shape_error("head_dim differs between q and k_cache");
  if (page_size != 1) shape_error("only page_size 1 is supported");
  if (kv_heads <= 0 || qo_heads % kv_heads != 0) {
    shape_error("num_qo_heads must be a multiple of num_kv_heads");
  }
  if (kv_indptr.shape() != Shape{batch + 1}) {
    throw Error(ErrorCode::kConstraintViolated, "len_indptr == batch_size + 1");
  }
  const auto indptr = kv_indptr.ints();
  const auto indices = kv_indices.ints();
  if (indptr.back() != static_cast<int64_t>(indices.size())) {
    throw Error(ErrorCode::kConstraintViolated, "num_kv_indices == kv_indptr[-1]");
  }
  const int64_t ratio = qo_heads / kv_heads;
  const auto qv = q.floats(), kv = k_cache.floats(), vv = v_cache.floats();

  GqaDecodeResult out;
  out.output.assign(static_cast<std::size_t>(batch * qo_heads * dim), 0.0f);
  out.lse.assign(static_cast<std::size_t>(batch * qo_heads),
                 -std::numeric_limits<float>::infinity());
  std::vector<float> logits;
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t start = indptr[b], end = indptr[b + 1];
    if (start >= end) continue;  // no KV cache for this batch element
    if (start < 0 || end > static_cast<int64_t>(indices.size())) {
      throw Error(ErrorCode::kConstraintViolated, "kv_indptr out of range");
    }
    const int64_t tokens = end - start;
    logits.resize(static_cast<std::size_t>(tokens));
    for (int64_t h = 0; h < qo_heads; ++h) {
      const int64_t kv_head = h / ratio;
      const float* q_head = &qv[static_cast<std::size_t>((b * qo_heads + h) * dim)];
      float max_logit = -std::numeric_limits<float>::infinity();
      for (int64_t t = 0; t < tokens; ++t) {
        const int64_t page = indices[start + t];
        if (page < 0 || page >= pages) {
          throw Error(ErrorCode::kConstraintViolated,
                      "kv_indices entry " + std::to_string(page) + " out of range");
        }
        const float* k_row = &kv[static_cast<std::size_t>((page * kv_heads + kv_head) * dim)];
        float dot = 0.0f;
        for (int64_t d = 0; d < dim; ++d) dot += q_head[d] * k_row[d];
        logits[t] = dot * sm_scale;
        max_logit = std::max(max_logit, logits[t]);
      }
      float denom = 0.0f;
      for (int64_t t = 0; t < tokens; ++t) {
        logits[t] = std::exp(logits[t] - max_logit);
        denom += logits[t];
      }
      out.lse[b * qo_heads + h] =
          (max_logit + std::log(denom)) / static_cast<float>(std::log(2.0));
      float* o = &out.output[static_cast<std::size_t>((b * qo_heads + h) * dim)];
      for (int64_t t = 0; t < tokens; ++t) {
        const float weight = logits[t] / denom;
        const int64_t page = indices[start + t];
        const float* v_row = &vv[static_cast<std::size_t>((page * kv_heads + kv_head) * dim)];
        for (int64_t d = 0; d < dim; ++d) o[d] += weight * v_row[d];
      }
    }
  }
  return out;
}

std::pair<Tensor, Tensor> ref_gqa_paged_decode(const Tensor& q, const Tensor& k_cache,
                                               const Tensor& v_cache,
                                               const Tensor& kv_indptr,
                                               const Tensor& kv_indices, float sm_scale,
                                               DType out_dtype) {
  GqaDecodeResult r =
      gqa_paged_decode_f32(q, k_cache, v_cache, kv_indptr, kv_indices, sm_scale);
  const int64_t batch = q.shape()[0], heads = q.shape()[1];
  return {Tensor::from_floats(out_dtype, q.shape(), std::move(r.output)),
          Tensor::from_floats(DType::kF32, {batch, heads}, std::move(r.lse))};
}

SamplingTarget derive_sampling_target(std::span<const double> p,
                                      std::optional<int64_t> top_k,
                                      std::optional<double> top_p) {
  const std::size_t vocab = p.size();
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kDegenerateDistribution, "probabilities must be finite and >= 0");
    }
    total += v;
  }
  if (vocab == 0 || total <= 0.0) {
    throw Error(ErrorCode::kDegenerateDistribution, "probability mass is zero");
  }
  std::vector<std::size_t> order(vocab);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });

  std::size_t keep = vocab;
  if (top_k) {
    if (*top_k < 1) throw Error(ErrorCode::kDegenerateDistribution, "top_k must be >= 1");
    keep = std::min<std::size_t>(keep, static_cast<std::size_t>(*top_k));
  }
  if (top_p) {
    if (!(*top_p > 0.0 && *top_p <= 1.0)) {
      throw Error(ErrorCode::kDegenerateDistribution, "top_p must lie in (0, 1]");
    }
    // Relative slack absorbs rounding in the running sum.
    const double threshold = *top_p * total * (1.0 - 1e-12);
    double cumulative = 0.0;
    std::size_t prefix = vocab;
    for (std::size_t i = 0; i < vocab; ++i) {
      cumulative += p[order[i]];
      if (cumulative >= threshold) {
        prefix = i + 1;
        break;
      }
    }
    keep = std::min(keep, prefix);
  }

  SamplingTarget target;
  target.mask.assign(vocab, false);
  target.q.assign(vocab, 0.0);
  double kept_mass = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    target.mask[order[i]] = true;
    kept_mass += p[order[i]];
  }
  if (kept_mass <= 0.0) {
    throw Error(ErrorCode::kDegenerateDistribution, "masked probability mass is zero");
  }
  for (std::size_t i = 0; i < vocab; ++i) {
    if (target.mask[i]) target.q[i] = p[i] / kept_mass;
  }
  return target;
}

int64_t sample_index(const SamplingTarget& target, double u) {
  double cumulative = 0.0;
  int64_t last = -1;
  for (std::size_t i = 0; i < target.q.size(); ++i) {
    if (!target.mask[i] || target.q[i] <= 0.0) continue;
    cumulative += target.q[i];
    last = static_cast<int64_t>(i);
    if (u < cumulative) return last;
  }
  return last;
}

Tensor ref_sampling(const Tensor& probs, const Tensor& top_k, const Tensor& top_p,
                    uint64_t seed, DType out_dtype) {
  expect_rank(probs, 2, "probs");
  expect_float(probs, "probs");
  expect_int(top_k, "top_k");
  expect_float(top_p, "top_p");
  const int64_t rows = probs.shape()[0], vocab = probs.shape()[1];
  if (top_k.shape() != Shape{rows} || top_p.shape() != Shape{rows}) {
    shape_error("top_k and top_p must have shape [batch_size]");
  }
  const Philox rng(seed);
  const auto pv = probs.floats();
  std::vector<int64_t> samples(static_cast<std::size_t>(rows));
  std::vector<double> row(static_cast<std::size_t>(vocab));
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t i = 0; i < vocab; ++i) row[i] = pv[static_cast<std::size_t>(r * vocab + i)];
    const SamplingTarget target = derive_sampling_target(
        row, top_k.ints()[static_cast<std::size_t>(r)],
        static_cast<double>(top_p.floats()[static_cast<std::size_t>(r)]));
    samples[r] = sample_index(target, rng.uniform(static_cast<uint64_t>(r)));
  }
  return Tensor::from_ints(out_dtype, {rows}, std::move(samples));
}

namespace {

void expect_arity(const Definition& d, const TensorMap& inputs, std::size_t min_in,
                  std::size_t max_in, std::size_t outputs) {
  if (inputs.size() < min_in || inputs.size() > max_in || d.outputs.size() != outputs) {
    shape_error(d.name + ": op_type '" + d.op_type + "' expects " + std::to_string(min_in) +
                " input(s) and " + std::to_string(outputs) + " output(s)");
  }
}

}  // namespace

TensorMap run_reference(const Definition& d, const TensorMap& inputs, uint64_t seed) {
  const auto op = resolve_op_type(d.op_type);
  if (!op) {
    throw Error(ErrorCode::kUnsupportedOpType,
                "no built-in evaluator for op_type '" + d.op_type + "'");
  }
  TensorMap out;
  auto out_name = [&](std::size_t i) { return d.outputs[i].first; };
  auto out_dtype = [&](std::size_t i) { return d.outputs[i].second.dtype; };
  switch (*op) {
    case OpType::kGemm:
      expect_arity(d, inputs, 2, 2, 1);
      out.set(out_name(0), ref_gemm(inputs[0].second, inputs[1].second, out_dtype(0)));
      break;
    case OpType::kFusedAddRmsnorm: {
      expect_arity(d, inputs, 3, 4, 2);
      const float eps = inputs.size() == 4 ? static_cast<float>(inputs[3].second.item())
                                           : kDefaultRmsNormEps;
      RmsNormOutputs r = ref_fused_add_rmsnorm(inputs[0].second, inputs[1].second,
                                               inputs[2].second, eps, out_dtype(0),
                                               out_dtype(1));
      out.set(out_name(0), std::move(r.y));
      out.set(out_name(1), std::move(r.residual));
      break;
    }
    case OpType::kGqaPagedDecode: {
      expect_arity(d, inputs, 6, 6, 2);
      auto [o, lse] = ref_gqa_paged_decode(
          inputs[0].second, inputs[1].second, inputs[2].second, inputs[3].second,
          inputs[4].second, static_cast<float>(inputs[5].second.item()), out_dtype(0));
      out.set(out_name(0), std::move(o));
      out.set(out_name(1),
              out_dtype(1) == DType::kF32 ? std::move(lse) : quantize(lse, out_dtype(1)));
      break;
    }
    case OpType::kSamplingTopKTopP:
      expect_arity(d, inputs, 3, 3, 1);
      out.set(out_name(0), ref_sampling(inputs[0].second, inputs[1].second,
                                        inputs[2].second, seed, out_dtype(0)));
      break;
  }
  return out;
}

PageTable generate_page_table(int64_t batch_size, int64_t num_kv_indices,
                              int64_t num_pages, uint64_t seed) {
  const Philox rng(seed, /*stream=*/1);
  uint64_t draw = 0;
  // Random composition of num_kv_indices into batch_size (possibly empty) rows.
  std::vector<int64_t> cuts;
  for (int64_t i = 0; i + 1 < batch_size; ++i) {
    cuts.push_back(static_cast<int64_t>(rng.bits64(draw++) %
                                        static_cast<uint64_t>(num_kv_indices + 1)));
  }
  std::sort(cuts.begin(), cuts.end());
  std::vector<int64_t> indptr{0};
  for (int64_t c : cuts) indptr.push_back(c);
  indptr.push_back(num_kv_indices);
  if (batch_size == 0) indptr = {0};

  std::vector<int64_t> indices;
  std::vector<int64_t> pool(static_cast<std::size_t>(std::max<int64_t>(num_pages, 0)));
  for (std::size_t b = 0; b + 1 < indptr.size(); ++b) {
    const int64_t len = indptr[b + 1] - indptr[b];
    std::vector<int64_t> row;
    if (len <= num_pages) {
      std::iota(pool.begin(), pool.end(), 0);
      for (int64_t i = 0; i < len; ++i) {  // partial Fisher-Yates
        const auto j = i + static_cast<int64_t>(rng.bits64(draw++) %
                                                static_cast<uint64_t>(num_pages - i));
        std::swap(pool[i], pool[j]);
        row.push_back(pool[i]);
      }
    } else {
      for (int64_t i = 0; i < len; ++i) {
        row.push_back(static_cast<int64_t>(rng.bits64(draw++) %
                                           static_cast<uint64_t>(num_pages)));
      }
    }
    std::sort(row.begin(), row.end());
    indices.insert(indices.end(), row.begin(), row.end());
  }
  const auto n = static_cast<int64_t>(indptr.size());
  return {Tensor::from_ints(DType::kI32, {n}, std::move(indptr)),
          Tensor::from_ints(DType::kI32, {num_kv_indices}, std::move(indices))};
}

Tensor generate_probabilities(int64_t rows, int64_t vocab, uint64_t seed) {
  const Philox rng(seed, /*stream=*/2);
  std::vector<float> out(static_cast<std::size_t>(rows * vocab));
  for (int64_t r = 0; r < rows; ++r) {
    double total = 0.0;
    std::vector<double> row(static_cast<std::size_t>(vocab));
    for (int64_t i = 0; i < vocab; ++i) {
      row[i] = std::exp(rng.normal(static_cast<uint64_t>(r * vocab + i)));
      total += row[i];
    }
    for (int64_t i = 0; i < vocab; ++i) {
      out[static_cast<std::size_t>(r * vocab + i)] = static_cast<float>(row[i] / total);
    }
  }
  return Tensor::from_floats(DType::kF32, {rows, vocab}, std::move(out));
}

void prepare_structured_inputs(const Definition& d, const Workload& w,
                               const BoundShapes& bound, TensorMap& inputs,
                               uint64_t seed_base) {
  const auto op = resolve_op_type(d.op_type);
  if (!op) return;
  auto is_random = [&](std::size_t pos) {
    if (pos >= d.inputs.size()) return false;
    const InputSpec* spec = w.find_input(d.inputs[pos].first);
    return spec != nullptr && spec->kind == InputKind::kRandom;
  };
  auto name = [&](std::size_t pos) { return d.inputs[pos].first; };
  auto dtype = [&](std::size_t pos) { return d.inputs[pos].second.dtype; };
  const uint64_t seed = mix_seed(seed_base, 0x5eed);
  switch (*op) {
    case OpType::kGqaPagedDecode: {
      if (d.inputs.size() != 6) return;
      if (is_random(3) || is_random(4)) {
        const Shape& indptr_shape = bound.shapes.at(name(3));
        const Shape& indices_shape = bound.shapes.at(name(4));
        const Shape& cache_shape = bound.shapes.at(name(1));
        if (indptr_shape.size() != 1 || indices_shape.size() != 1 || cache_shape.empty()) return;
        PageTable table = generate_page_table(indptr_shape[0] - 1, indices_shape[0],
                                              cache_shape[0], seed);
        if (is_random(3)) {
          inputs.set(name(3), Tensor::from_ints(dtype(3), table.kv_indptr.shape(),
                                                {table.kv_indptr.ints().begin(),
                                                 table.kv_indptr.ints().end()}));
        }
        if (is_random(4)) {
          inputs.set(name(4), Tensor::from_ints(dtype(4), table.kv_indices.shape(),
                                                {table.kv_indices.ints().begin(),
                                                 table.kv_indices.ints().end()}));
        }
      }
      if (is_random(5)) {
        const Shape& q_shape = bound.shapes.at(name(0));
        const double head_dim = q_shape.empty() ? 1.0 : static_cast<double>(q_shape.back());
        inputs.set(name(5), Tensor::scalar(dtype(5), 1.0 / std::sqrt(head_dim)));
      }
      break;
    }
    case OpType::kSamplingTopKTopP: {
      if (d.inputs.size() != 3) return;
      const Shape& probs_shape = bound.shapes.at(name(0));
      if (probs_shape.size() != 2) return;
      const int64_t rows = probs_shape[0], vocab = probs_shape[1];
      const Philox rng(seed, /*stream=*/3);
      if (is_random(0)) {
        inputs.set(name(0), quantize(generate_probabilities(rows, vocab, seed), dtype(0)));
      }
      if (is_random(1)) {
        std::vector<int64_t> k(static_cast<std::size_t>(rows));
        for (int64_t r = 0; r < rows; ++r) {
          k[r] = 1 + static_cast<int64_t>(rng.bits64(static_cast<uint64_t>(r)) %
                                          static_cast<uint64_t>(std::max<int64_t>(vocab, 1)));
        }
        inputs.set(name(1), Tensor::from_ints(dtype(1), {rows}, std::move(k)));
      }
      if (is_random(2)) {
        std::vector<float> p(static_cast<std::size_t>(rows));
        for (int64_t r = 0; r < rows; ++r) {
          p[r] = static_cast<float>(
              0.5 + 0.5 * rng.uniform(static_cast<uint64_t>(rows + r)));
        }
        inputs.set(name(2), Tensor::from_floats(dtype(2), {rows}, std::move(p)));
      }
      break;
    }
    case OpType::kFusedAddRmsnorm:
      if (d.inputs.size() == 4 && is_random(3)) {
        inputs.set(name(3), Tensor::scalar(dtype(3), kDefaultRmsNormEps));
      }
      break;
    case OpType::kGemm:
      break;
  }
}

}  // namespace fib
