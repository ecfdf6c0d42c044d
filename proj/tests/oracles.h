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

#ifndef FIB_TESTS_ORACLES_H_
#define FIB_TESTS_ORACLES_H_

// Independent implementations used as test oracles. Written for clarity, in
// double precision where that helps, and never calling the code under test.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "fib/dtype.h"
#include "fib/tensor.h"

namespace fib::testing {

// Textbook triple loop: f32 accumulation in ascending k, one rounding at the end.
inline std::vector<float> naive_gemm(const Tensor& a, const Tensor& b, DType out) {
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  std::vector<float> c(static_cast<std::size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (int64_t t = 0; t < k; ++t) acc += a.floats()[i * k + t] * b.floats()[j * k + t];
      c[i * n + j] = round_to_dtype(acc, out);
    }
  }
  return c;
}

struct DenseAttention {
  std::vector<double> out;  // [batch, qo_heads, head_dim]
  std::vector<double> lse;  // [batch, qo_heads], base 2, -inf for empty rows
};

// Gathers every row's pages into dense K/V and runs plain softmax attention.
inline DenseAttention dense_gqa(const Tensor& q, const Tensor& k_cache, const Tensor& v_cache,
                                const Tensor& indptr, const Tensor& indices, double scale) {
  const int64_t batch = q.shape()[0], heads = q.shape()[1], dim = q.shape()[2];
  const int64_t kv_heads = k_cache.shape()[2];
  const int64_t group = heads / kv_heads;
  DenseAttention r;
  r.out.assign(static_cast<std::size_t>(batch * heads * dim), 0.0);
  r.lse.assign(static_cast<std::size_t>(batch * heads),
               -std::numeric_limits<double>::infinity());
  for (int64_t b = 0; b < batch; ++b) {
    std::vector<int64_t> pages;
    for (int64_t i = indptr.ints()[b]; i < indptr.ints()[b + 1]; ++i) {
      pages.push_back(indices.ints()[i]);
    }
    if (pages.empty()) continue;
    for (int64_t h = 0; h < heads; ++h) {
      const int64_t kvh = h / group;
      std::vector<double> logits;
      for (int64_t p : pages) {
        double dot = 0.0;
        for (int64_t d = 0; d < dim; ++d) {
          dot += static_cast<double>(q.floats()[(b * heads + h) * dim + d]) *
                 k_cache.floats()[(p * kv_heads + kvh) * dim + d];
        }
        logits.push_back(dot * scale);
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double denom = 0.0;
      for (double l : logits) denom += std::exp(l - mx);
      r.lse[b * heads + h] = (mx + std::log(denom)) / std::log(2.0);
      for (std::size_t j = 0; j < pages.size(); ++j) {
        const double w = std::exp(logits[j] - mx) / denom;
        for (int64_t d = 0; d < dim; ++d) {
          r.out[(b * heads + h) * dim + d] +=
              w * v_cache.floats()[(pages[j] * kv_heads + kvh) * dim + d];
        }
      }
    }
  }
  return r;
}

// max |a - b| / max(|b|, 1); equal infinities count as zero error.
inline double max_scaled_error(std::span<const float> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (static_cast<double>(a[i]) == b[i]) continue;
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1.0));
  }
  return worst;
}

struct GqaCase {
  Tensor q, k_cache, v_cache, indptr, indices;
  double scale = 0.0;
};

// Random page-size-1 layout; rows may be empty and `empty_row` forces one.
inline GqaCase random_gqa_case(std::mt19937& gen, bool empty_row) {
  std::uniform_int_distribution<int> kvh_dist(1, 3), group_dist(1, 4), dim_dist(2, 16);
  std::uniform_int_distribution<int> batch_dist(1, 5), pages_dist(1, 24);
  const int64_t kv_heads = kvh_dist(gen), heads = kv_heads * group_dist(gen);
  const int64_t dim = dim_dist(gen), batch = batch_dist(gen) + (empty_row ? 1 : 0);
  const int64_t num_pages = pages_dist(gen);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  auto random = [&](Shape shape) {
    std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
    for (float& x : v) x = normal(gen);
    return Tensor::from_floats(DType::kF32, std::move(shape), std::move(v));
  };
  GqaCase c;
  c.q = random({batch, heads, dim});
  c.k_cache = random({num_pages, 1, kv_heads, dim});
  c.v_cache = random({num_pages, 1, kv_heads, dim});
  std::vector<int64_t> indptr{0}, indices;
  const int64_t forced = empty_row ? std::uniform_int_distribution<int64_t>(0, batch - 1)(gen)
                                   : -1;
  std::uniform_int_distribution<int64_t> len_dist(0, 2 * num_pages), page(0, num_pages - 1);
  for (int64_t b = 0; b < batch; ++b) {
    const int64_t len = b == forced ? 0 : len_dist(gen);
    for (int64_t i = 0; i < len; ++i) indices.push_back(page(gen));
    indptr.push_back(static_cast<int64_t>(indices.size()));
  }
  const auto n = static_cast<int64_t>(indices.size());
  c.indptr = Tensor::from_ints(DType::kI32, {batch + 1}, std::move(indptr));
  c.indices = Tensor::from_ints(DType::kI32, {n}, std::move(indices));
  c.scale = 1.0 / std::sqrt(static_cast<double>(dim));
  return c;
}

}  // namespace fib::testing

#endif  // FIB_TESTS_ORACLES_H_
