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

#ifndef REFUSAL_CONSTRUCT_H_
#define REFUSAL_CONSTRUCT_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "refusal/corpus.h"
#include "refusal/identify.h"
#include "refusal/prng.h"

namespace refusal {

// Uncertainty expressions used by the replacement strategy, byte-exact
// (the last one has a typographic apostrophe and no final period).
inline constexpr std::array<std::string_view, 16> kUncertaintyExpressions = {
    "The answer is unknown.",
    "The answer is uncertain.",
    "The answer is unclear.",
    "There is no scientific evidence.",
    "There is no definitive answer.",
    "There is no right answer.",
    "There is much debate.",
    "There is no known case.",
    "There is no concrete answer to this question.",
    "There is no public information available.",
    "It is impossible to know.",
    "It is impossible to answer.",
    "It is difficult to predict.",
    "It is not known.",
    "We do not know.",
    "I’m not sure",
};

enum class Bucket { kCertain, kUncertain };
enum class Strategy { kPadding, kReplacement };

std::string_view to_string(Bucket bucket);
std::string_view to_string(Strategy strategy);
Strategy parse_strategy(std::string_view text);

// One training example. loss_spans are [start, end) offsets in Unicode code
// points into prompt + completion.
struct TrainingRecord {
  std::string prompt;
  std::string completion;
  std::vector<std::pair<size_t, size_t>> loss_spans;
  std::string origin_id;
  Bucket bucket = Bucket::kCertain;
  Strategy strategy = Strategy::kPadding;
};

nlohmann::ordered_json to_json(const TrainingRecord& record);

// "<answer>. <probe> sure|unsure", with the whole completion trainable.
// Throws ValidationError when the item has no gold answer.
TrainingRecord pad_record(const QAItem& item, bool sure,
                          const PromptTemplate& tmpl = {});

// Certain: completion is the gold answer. Uncertain: one of the 16
// expressions chosen by rng.uniform_below(16).
TrainingRecord replace_record(const QAItem& item, Bucket bucket, Prng& rng,
                              const PromptTemplate& tmpl = {});

struct BuildSummary {
  size_t records = 0;
  size_t certain = 0;
  size_t uncertain = 0;
  std::string sha256;
};

nlohmann::json to_json(const BuildSummary& summary);

// Training JSONL in dataset order (one record per line). Throws
// ValidationError when the partition does not cover exactly the dataset's
// ids.
std::string build_training_jsonl(const Dataset& d, const Partition& p, Strategy strategy,
                                 uint64_t seed, BuildSummary* summary = nullptr,
                                 const PromptTemplate& tmpl = {});

BuildSummary build_training_file(const Dataset& d, const Partition& p, Strategy strategy,
                                 uint64_t seed, const std::filesystem::path& out,
                                 const PromptTemplate& tmpl = {});

}  // namespace refusal

#endif  // REFUSAL_CONSTRUCT_H_
