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

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "fib/binding.h"
#include "fib/error.h"
#include "fib/reference.h"
#include "oracles.h"
#include "test_util.h"

namespace fib {
namespace {

using testing::dense_gqa;
using testing::max_scaled_error;
using testing::naive_gemm;

Tensor random_tensor(std::mt19937& gen, DType dtype, Shape shape) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(shape_numel(shape)));
  for (float& x : v) x = normal(gen);
  return Tensor::from_floats(dtype, std::move(shape), std::move(v));
}

TEST(Gemm, HandComputed) {
  const Tensor a = Tensor::from_floats(DType::kF32, {2, 2}, {1, 2, 3, 4});
  const Tensor b = Tensor::from_floats(DType::kF32, {2, 2}, {5, 6, 7, 8});
  // C = A @ B.T = [[17, 23], [39, 53]]
  const Tensor c = ref_gemm(a, b, DType::kF32);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<float>(c.floats().begin(), c.floats().end()),
            (std::vector<float>{17, 23, 39, 53}));
}

TEST(Gemm, MatchesNaiveLoopExactly) {
  std::mt19937 gen(11);
  std::uniform_int_distribution<int> dim(1, 64);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t m = dim(gen), n = dim(gen), k = dim(gen);
    const DType in = trial % 2 ? DType::kF16 : DType::kF32;
    const DType out = trial % 3 ? DType::kF16 : DType::kF32;
    const Tensor a = random_tensor(gen, in, {m, k});
    const Tensor b = random_tensor(gen, in, {n, k});
    const Tensor c = ref_gemm(a, b, out);
    ASSERT_EQ(c.dtype(), out);
    const auto want = naive_gemm(a, b, out);
    ASSERT_EQ(std::vector<float>(c.floats().begin(), c.floats().end()), want) << trial;
  }
}

TEST(Gemm, ShapeMismatchThrows) {
  const Tensor a = Tensor::zeros(DType::kF32, {2, 3});
  const Tensor b = Tensor::zeros(DType::kF32, {2, 4});
  EXPECT_THROW(ref_gemm(a, b), Error);
}

TEST(RmsNorm, MatchesDoubleOracle) {
  std::mt19937 gen(5);
  const int64_t rows = 4, hidden = 64;
  const Tensor x = random_tensor(gen, DType::kF32, {rows, hidden});
  const Tensor r = random_tensor(gen, DType::kF32, {rows, hidden});
  const Tensor w = random_tensor(gen, DType::kF32, {hidden});
  const float eps = 1e-6f;
  const RmsNormOutputs o = ref_fused_add_rmsnorm(x, r, w, eps, DType::kF32, DType::kF32);
  for (int64_t i = 0; i < rows; ++i) {
    double ss = 0.0;
    for (int64_t j = 0; j < hidden; ++j) {
      const double h = static_cast<double>(x.floats()[i * hidden + j]) + r.floats()[i * hidden + j];
      ss += h * h;
      EXPECT_FLOAT_EQ(o.residual.floats()[i * hidden + j], static_cast<float>(h));
    }
    const double inv = 1.0 / std::sqrt(ss / hidden + eps);
    for (int64_t j = 0; j < hidden; ++j) {
      const double h = static_cast<double>(x.floats()[i * hidden + j]) + r.floats()[i * hidden + j];
      const double want = h * inv * w.floats()[j];
      EXPECT_NEAR(o.y.floats()[i * hidden + j], want, 1e-5 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST(Gqa, MatchesDenseAttentionIncludingEmptyRows) {
  std::mt19937 gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = testing::random_gqa_case(gen, trial % 4 == 0);
    const GqaDecodeResult got = gqa_paged_decode_f32(c.q, c.k_cache, c.v_cache, c.indptr,
                                                     c.indices, static_cast<float>(c.scale));
    const auto want = dense_gqa(c.q, c.k_cache, c.v_cache, c.indptr, c.indices, c.scale);
    EXPECT_LE(max_scaled_error(got.output, want.out), 1e-4) << trial;
    EXPECT_LE(max_scaled_error(got.lse, want.lse), 1e-4) << trial;
  }
}

TEST(Gqa, EmptyRowGivesZeroOutputAndNegativeInfinityLse) {
  std::mt19937 gen(9);
  const int64_t heads = 4, kv = 2, dim = 8;
  const Tensor q = random_tensor(gen, DType::kBF16, {2, heads, dim});
  const Tensor k = random_tensor(gen, DType::kBF16, {3, 1, kv, dim});
  const Tensor v = random_tensor(gen, DType::kBF16, {3, 1, kv, dim});
  const Tensor indptr = Tensor::from_ints(DType::kI32, {3}, {0, 0, 2});
  const Tensor indices = Tensor::from_ints(DType::kI32, {2}, {2, 0});
  auto [out, lse] = ref_gqa_paged_decode(q, k, v, indptr, indices, 0.5f);
  EXPECT_EQ(out.dtype(), DType::kBF16);
  for (int64_t i = 0; i < heads * dim; ++i) EXPECT_EQ(out.floats()[i], 0.0f);
  for (int64_t h = 0; h < heads; ++h) {
    EXPECT_EQ(lse.floats()[h], -std::numeric_limits<float>::infinity());
    EXPECT_TRUE(std::isfinite(lse.floats()[heads + h]));
  }
}

// One page: softmax weight 1, so output = v and lse = logit / ln 2.
TEST(Gqa, SinglePageClosedForm) {
  const Tensor q = Tensor::from_floats(DType::kF32, {1, 1, 2}, {1, 2});
  const Tensor k = Tensor::from_floats(DType::kF32, {1, 1, 1, 2}, {3, 4});
  const Tensor v = Tensor::from_floats(DType::kF32, {1, 1, 1, 2}, {-1, 5});
  const auto r = gqa_paged_decode_f32(q, k, v, Tensor::from_ints(DType::kI32, {2}, {0, 1}),
                                      Tensor::from_ints(DType::kI32, {1}, {0}), 0.5f);
  EXPECT_FLOAT_EQ(r.output[0], -1.0f);
  EXPECT_FLOAT_EQ(r.output[1], 5.0f);
  EXPECT_FLOAT_EQ(r.lse[0], static_cast<float>(5.5 / std::log(2.0)));
}

TEST(Gqa, RejectsBadLayouts) {
  const Tensor q = Tensor::zeros(DType::kF32, {1, 2, 2});
  const Tensor k = Tensor::zeros(DType::kF32, {2, 2, 1, 2});  // page_size 2
  const Tensor ok_k = Tensor::zeros(DType::kF32, {2, 1, 1, 2});
  const Tensor indptr = Tensor::from_ints(DType::kI32, {2}, {0, 1});
  const Tensor indices = Tensor::from_ints(DType::kI32, {1}, {0});
  EXPECT_THROW(gqa_paged_decode_f32(q, k, k, indptr, indices, 1.0f), Error);
  const Tensor bad_ptr = Tensor::from_ints(DType::kI32, {2}, {0, 2});
  EXPECT_THROW(gqa_paged_decode_f32(q, ok_k, ok_k, bad_ptr, indices, 1.0f), Error);
  const Tensor bad_page = Tensor::from_ints(DType::kI32, {1}, {5});
  EXPECT_THROW(gqa_paged_decode_f32(q, ok_k, ok_k, indptr, bad_page, 1.0f), Error);
}

TEST(Sampling, TargetOracles) {
  const std::vector<double> p{0.5, 0.3, 0.2};
  const SamplingTarget k2 = derive_sampling_target(p, 2, std::nullopt);
  EXPECT_EQ(k2.mask, (std::vector<bool>{true, true, false}));
  EXPECT_DOUBLE_EQ(k2.q[0], 0.625);
  EXPECT_DOUBLE_EQ(k2.q[1], 0.375);
  EXPECT_EQ(k2.q[2], 0.0);

  EXPECT_EQ(derive_sampling_target(p, std::nullopt, 0.8).mask,
            (std::vector<bool>{true, true, false}));
  EXPECT_EQ(derive_sampling_target(p, std::nullopt, 0.81).mask,
            (std::vector<bool>{true, true, true}));
  EXPECT_EQ(derive_sampling_target(p, std::nullopt, 0.5).mask,
            (std::vector<bool>{true, false, false}));
  // Intersection of both filters.
  EXPECT_EQ(derive_sampling_target(p, 1, 0.9).mask, (std::vector<bool>{true, false, false}));
  // Ties keep the lower index.
  const std::vector<double> tie{0.25, 0.25, 0.25, 0.25};
  EXPECT_EQ(derive_sampling_target(tie, 2, std::nullopt).mask,
            (std::vector<bool>{true, true, false, false}));
}

TEST(Sampling, DegenerateInputsThrow) {
  const std::vector<double> zero{0.0, 0.0};
  EXPECT_THROW(derive_sampling_target(zero, std::nullopt, std::nullopt), Error);
  const std::vector<double> p{0.5, 0.5};
  EXPECT_THROW(derive_sampling_target(p, 0, std::nullopt), Error);
  EXPECT_THROW(derive_sampling_target(p, std::nullopt, 0.0), Error);
  const std::vector<double> nan{std::nan(""), 1.0};
  EXPECT_THROW(derive_sampling_target(nan, std::nullopt, std::nullopt), Error);
}

TEST(Sampling, InverseCdf) {
  const std::vector<double> p{0.5, 0.3, 0.2};
  const SamplingTarget t = derive_sampling_target(p, 2, std::nullopt);
  EXPECT_EQ(sample_index(t, 0.0), 0);
  EXPECT_EQ(sample_index(t, 0.6), 0);
  EXPECT_EQ(sample_index(t, 0.63), 1);
  EXPECT_EQ(sample_index(t, 0.999999), 1);
}

TEST(Sampling, SamplesStayInMaskAndReproduce) {
  const Tensor probs = generate_probabilities(64, 16, 1);
  std::vector<int64_t> k(64);
  std::vector<float> tp(64);
  for (int i = 0; i < 64; ++i) {
    k[i] = 1 + i % 16;
    tp[i] = 0.5f + 0.5f * static_cast<float>(i % 7) / 7.0f;
  }
  const Tensor top_k = Tensor::from_ints(DType::kI32, {64}, k);
  const Tensor top_p = Tensor::from_floats(DType::kF32, {64}, tp);
  const Tensor s = ref_sampling(probs, top_k, top_p, 77);
  EXPECT_EQ(s, ref_sampling(probs, top_k, top_p, 77));
  for (int64_t r = 0; r < 64; ++r) {
    std::vector<double> row(16);
    for (int i = 0; i < 16; ++i) row[i] = probs.floats()[r * 16 + i];
    const auto t = derive_sampling_target(row, k[r], tp[r]);
    EXPECT_TRUE(t.mask[s.ints()[r]]) << r;
  }
}

TEST(Generators, PageTableInvariants) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const int64_t batch = 1 + seed % 5, n = seed % 13, pages = 1 + seed % 9;
    const PageTable t = generate_page_table(batch, n, pages, seed);
    const auto ptr = t.kv_indptr.ints();
    ASSERT_EQ(static_cast<int64_t>(ptr.size()), batch + 1);
    EXPECT_EQ(ptr[0], 0);
    EXPECT_EQ(ptr[batch], n);
    for (int64_t b = 0; b < batch; ++b) {
      ASSERT_LE(ptr[b], ptr[b + 1]);
      for (int64_t i = ptr[b]; i < ptr[b + 1]; ++i) {
        EXPECT_GE(t.kv_indices.ints()[i], 0);
        EXPECT_LT(t.kv_indices.ints()[i], pages);
        if (i > ptr[b]) EXPECT_LE(t.kv_indices.ints()[i - 1], t.kv_indices.ints()[i]);
      }
    }
  }
  const Tensor probs = generate_probabilities(3, 10, 4);
  for (int r = 0; r < 3; ++r) {
    double sum = 0.0;
    for (int i = 0; i < 10; ++i) sum += probs.floats()[r * 10 + i];
    EXPECT_NEAR(sum, 1.0, 1e-5);
  }
}

TEST(RunReference, DispatchesByOpType) {
  const Definition d = parse_definition_text(
      testing::read_file(testing::data_dir() / "examples" / "gemm_definition.json"));
  Workload w = parse_trace(testing::read_file(testing::data_dir() / "examples" /
                                              "gemm_workload.json")).workload;
  const BoundShapes bound = bind_workload(d, w);
  const TensorMap in = materialize_inputs(d, w, bound, 0);
  const TensorMap out = run_reference(d, in);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].first, "C");
  EXPECT_EQ(out.at("C").shape(), (Shape{6, 128}));
  EXPECT_EQ(out.at("C").dtype(), DType::kF16);

  Definition unknown = d;
  unknown.op_type = "moe_dispatch";
  try {
    run_reference(unknown, in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnsupportedOpType);
  }
}

TEST(RunReference, StructuredGqaInputsSatisfyConstraints) {
  const Definition d = parse_definition_text(
      testing::read_file(testing::data_dir() / "examples" / "gqa_definition.json"));
  Workload w;
  w.uuid = "gqa-random";
  w.axes = {{"batch_size", 3}, {"num_pages", 16}, {"len_indptr", 4}, {"num_kv_indices", 11}};
  for (const auto& [name, spec] : d.inputs) w.inputs.push_back({name, InputSpec{}});
  const BoundShapes bound = bind_workload(d, w);
  TensorMap in = materialize_inputs(d, w, bound, 5);
  prepare_structured_inputs(d, w, bound, in, 5);
  EXPECT_NO_THROW(check_deferred_constraints(bound, in));
  EXPECT_NEAR(in.at("sm_scale").item(), 1.0 / std::sqrt(128.0), 1e-7);
  const TensorMap out = run_reference(d, in);
  EXPECT_EQ(out.at("output").shape(), (Shape{3, 32, 128}));
  EXPECT_EQ(out.at("lse").dtype(), DType::kF32);
}

}  // namespace
}  // namespace fib
