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

#ifndef FIB_RNG_H_
#define FIB_RNG_H_

#include <array>
#include <cstdint>
#include <string_view>

namespace fib {

// 64-bit FNV-1a. Used for seed derivation and content keys.
uint64_t fnv1a64(std::string_view data, uint64_t basis = 0xcbf29ce484222325ull);

uint64_t mix_seed(uint64_t a, uint64_t b);

// Philox4x32-10 counter-based generator: the stream is a pure function of
// (key, counter), so any process can reproduce any element independently.
class Philox {
 public:
  explicit Philox(uint64_t key, uint64_t stream = 0) : key_(key), stream_(stream) {}

  // Four 32-bit words for block `counter`.
  std::array<uint32_t, 4> block(uint64_t counter) const;

  // Element-indexed draws.
  double uniform(uint64_t index) const;  // [0, 1)
  double normal(uint64_t index) const;   // standard normal (Box-Muller)
  uint64_t bits64(uint64_t index) const;

 private:
  uint64_t key_;
  uint64_t stream_;
};

}  // namespace fib

#endif  // FIB_RNG_H_
