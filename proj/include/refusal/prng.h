/*
 * Copyright 2026 The refusalkit Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef REFUSAL_PRNG_H_
#define REFUSAL_PRNG_H_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace refusal {

// Seeded generator used for every split, subsample and template draw.
//
// std::mt19937_64 is bit-exact across standard libraries; the bounded draw
// below is implemented here (rather than std::uniform_int_distribution, whose
// algorithm is implementation-defined) so that splits reproduce in any
// language that implements the same rejection rule.
class Prng {
 public:
  // Recorded in provenance next to every seed.
  static constexpr std::string_view kName = "mt19937_64/rejection-v1";

  explicit Prng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Uniform integer in [0, bound). Rejects the low (2^64 mod bound) values.
  uint64_t uniform_below(uint64_t bound);

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

// Fisher-Yates permutation of [0, n): for i = 0..n-2 swap i with
// i + uniform_below(n - i). Only the first `prefix` positions are drawn when
// prefix < n, which yields a uniform draw without replacement in draw order.
std::vector<size_t> seeded_permutation(size_t n, uint64_t seed,
                                       size_t prefix = SIZE_MAX);

// 64-bit FNV-1a over the bytes of `text`.
uint64_t fnv1a64(std::string_view text);

// SplitMix64 finalizer; used to derive independent stream seeds.
uint64_t mix64(uint64_t x);

// Seed for an independent stream keyed by (seed, key, index).
uint64_t derive_seed(uint64_t seed, std::string_view key, uint64_t index);

}  // namespace refusal

#endif  // REFUSAL_PRNG_H_
