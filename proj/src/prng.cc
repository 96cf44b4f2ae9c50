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

#include <numeric>
#include <utility>

namespace refusal {

uint64_t Prng::uniform_below(uint64_t bound) {
  if (bound <= 1) return 0;
  // (2^64 - bound) % bound == 2^64 % bound.
  const uint64_t threshold = (0 - bound) % bound;
  while (true) {
    const uint64_t r = next();
    if (r >= threshold) return r % bound;
  }
}

std::vector<size_t> seeded_permutation(size_t n, uint64_t seed,
                                       size_t prefix) {
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  if (n < 2) return order;
  Prng rng(seed);
  const size_t draws = std::min(prefix, n - 1);
  for (size_t i = 0; i < draws; ++i) {
    const size_t j = i + static_cast<size_t>(rng.uniform_below(n - i));
    std::swap(order[i], order[j]);
  }
  return order;
}

uint64_t fnv1a64(std::string_view text) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t derive_seed(uint64_t seed, std::string_view key, uint64_t index) {
  return mix64(mix64(seed ^ fnv1a64(key)) + index);
}

}  // namespace refusal
