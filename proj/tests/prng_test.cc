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

#include "refusal/prng.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace refusal {
namespace {

TEST(PrngTest, EngineIsStandardMt19937_64) {
  // The standard's conformance value: 10000th output for the default seed.
  Prng rng(5489u);
  uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next();
  EXPECT_EQ(v, 9981545732273789042ULL);
}

TEST(PrngTest, UniformBelowStaysInRange) {
  Prng rng(3);
  EXPECT_EQ(rng.uniform_below(0), 0u);
  EXPECT_EQ(rng.uniform_below(1), 0u);
  for (uint64_t bound : {2ULL, 3ULL, 7ULL, 16ULL, 1000ULL, (1ULL << 63) + 1}) {
    for (int i = 0; i < 2000; ++i) EXPECT_LT(rng.uniform_below(bound), bound);
  }
}

// Independent restatement of the rejection rule on a raw engine, with the
// threshold 2^64 mod bound computed in 128-bit arithmetic.
uint64_t reference_below(std::mt19937_64& engine, uint64_t bound) {
  const auto low = static_cast<uint64_t>((static_cast<unsigned __int128>(1) << 64) % bound);
  while (true) {
    const uint64_t r = engine();
    if (r >= low) return r % bound;
  }
}

TEST(PrngTest, UniformBelowMatchesReferenceRejection) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Prng rng(seed);
    std::mt19937_64 engine(seed);
    for (uint64_t bound = 2; bound < 200; ++bound) {
      ASSERT_EQ(rng.uniform_below(bound), reference_below(engine, bound));
    }
  }
}

TEST(PrngTest, UniformBelowPassesChiSquare) {
  // 16 buckets, 15 degrees of freedom; 30.578 is the 0.99 quantile.
  constexpr int kBuckets = 16;
  constexpr int kDraws = 16000;
  Prng rng(20240611);
  std::vector<int> counts(kBuckets, 0);
  for (int i = 0; i < kDraws; ++i) ++counts[rng.uniform_below(kBuckets)];
  const double expected = static_cast<double>(kDraws) / kBuckets;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 30.578);
}

TEST(PrngTest, Uniform01InUnitInterval) {
  Prng rng(9);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 10000.0, 0.5, 0.02);
}

TEST(SeededPermutationTest, IsAPermutation) {
  for (size_t n : {0u, 1u, 2u, 5u, 100u}) {
    auto p = seeded_permutation(n, 42);
    ASSERT_EQ(p.size(), n);
    std::vector<size_t> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (size_t i = 0; i < n; ++i) EXPECT_EQ(sorted[i], i);
  }
}

TEST(SeededPermutationTest, DeterministicPerSeed) {
  EXPECT_EQ(seeded_permutation(50, 1), seeded_permutation(50, 1));
  EXPECT_NE(seeded_permutation(50, 1), seeded_permutation(50, 2));
}

TEST(SeededPermutationTest, PrefixAgreesWithFullShuffle) {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const auto full = seeded_permutation(30, seed);
    const auto partial = seeded_permutation(30, seed, 7);
    EXPECT_TRUE(std::equal(full.begin(), full.begin() + 7, partial.begin())) << seed;
  }
}

TEST(SeededPermutationTest, MatchesIndependentFisherYates) {
  for (uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 engine(seed);
    std::vector<size_t> expected(17);
    std::iota(expected.begin(), expected.end(), 0);
    for (size_t i = 0; i + 1 < expected.size(); ++i) {
      std::swap(expected[i], expected[i + reference_below(engine, expected.size() - i)]);
    }
    EXPECT_EQ(seeded_permutation(17, seed), expected);
  }
}

TEST(SeededPermutationTest, AllOrderingsOfFourAreReachedEvenly) {
  // 24 orderings, 24000 seeds: each expected 1000 times.
  std::map<std::vector<size_t>, int> counts;
  for (uint64_t seed = 0; seed < 24000; ++seed) ++counts[seeded_permutation(4, seed)];
  ASSERT_EQ(counts.size(), 24u);
  double chi2 = 0.0;
  for (const auto& [perm, c] : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
  EXPECT_LT(chi2, 41.638);  // 23 dof, 0.99 quantile
}

TEST(HashTest, Fnv1aKnownValues) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(HashTest, Mix64IsSplitMix64) {
  // First outputs of SplitMix64 seeded with 0.
  EXPECT_EQ(mix64(0), 0xe220a8397b1dcdafULL);
  EXPECT_EQ(mix64(0x9e3779b97f4a7c15ULL), 0x6e789e6aa1b965f4ULL);
}

TEST(HashTest, DeriveSeedSeparatesStreams) {
  std::set<uint64_t> seen;
  for (uint64_t seed : {0ULL, 1ULL}) {
    for (const char* key : {"q1", "q2", "q10"}) {
      for (uint64_t index = 0; index < 10; ++index) {
        EXPECT_TRUE(seen.insert(derive_seed(seed, key, index)).second);
      }
    }
  }
  EXPECT_EQ(derive_seed(5, "k", 3), derive_seed(5, "k", 3));
}

}  // namespace
}  // namespace refusal
