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

#include "refusal/construct.h"

#include <set>
#include <unordered_map>

#include "refusal/digest.h"
#include "refusal/error.h"
#include "refusal/synthetic_model.h"
#include "refusal/text.h"

namespace refusal {

namespace {

TrainingRecord make_record(const QAItem& item, std::string prompt, std::string completion,
                           Bucket bucket, Strategy strategy) {
  TrainingRecord r;
  const size_t start = utf8_length(prompt);
  r.loss_spans.emplace_back(start, start + utf8_length(completion));
  r.prompt = std::move(prompt);
  r.completion = std::move(completion);
  r.origin_id = item.id;
  r.bucket = bucket;
  r.strategy = strategy;
  return r;
}

}  // namespace

std::string_view to_string(Bucket bucket) {
  return bucket == Bucket::kCertain ? "certain" : "uncertain";
}

std::string_view to_string(Strategy strategy) {
  return strategy == Strategy::kPadding ? "padding" : "replacement";
}

Strategy parse_strategy(std::string_view text) {
  if (text == "padding") return Strategy::kPadding;
  if (text == "replacement") return Strategy::kReplacement;
  throw ValidationError("unknown strategy '" + std::string(text) + "'");
}

nlohmann::ordered_json to_json(const TrainingRecord& record) {
  nlohmann::ordered_json out;
  out["prompt"] = record.prompt;
  out["completion"] = record.completion;
  auto spans = nlohmann::ordered_json::array();
  for (const auto& [s, e] : record.loss_spans) spans.push_back({s, e});
  out["loss_spans"] = spans;
  out["origin_id"] = record.origin_id;
  out["bucket"] = to_string(record.bucket);
  out["strategy"] = to_string(record.strategy);
  return out;
}

TrainingRecord pad_record(const QAItem& item, bool sure, const PromptTemplate& tmpl) {
  if (!item.answer) throw ValidationError("item '" + item.id + "' has no gold answer");
  std::string completion = *item.answer + ". " + std::string(kCertaintyProbe) +
                           (sure ? " sure" : " unsure");
  return make_record(item, render_prompt(item, tmpl), std::move(completion),
                     sure ? Bucket::kCertain : Bucket::kUncertain, Strategy::kPadding);
}

TrainingRecord replace_record(const QAItem& item, Bucket bucket, Prng& rng,
                              const PromptTemplate& tmpl) {
  std::string completion;
  if (bucket == Bucket::kCertain) {
    if (!item.answer) throw ValidationError("item '" + item.id + "' has no gold answer");
    completion = *item.answer;
  } else {
    completion = std::string(kUncertaintyExpressions[rng.uniform_below(kUncertaintyExpressions.size())]);
  }
  return make_record(item, render_prompt(item, tmpl), std::move(completion), bucket,
                     Strategy::kReplacement);
}

nlohmann::json to_json(const BuildSummary& summary) {
  return {{"records", summary.records},
          {"certain", summary.certain},
          {"uncertain", summary.uncertain},
          {"sha256", summary.sha256}};
}

std::string build_training_jsonl(const Dataset& d, const Partition& p, Strategy strategy,
                                 uint64_t seed, BuildSummary* summary,
                                 const PromptTemplate& tmpl) {
  if (!p.unresolved.empty()) {
    throw ValidationError("partition has " + std::to_string(p.unresolved.size()) +
                          " unresolved item(s)");
  }
  std::unordered_map<std::string, Bucket> bucket_of;
  for (const std::string& id : p.certain) bucket_of.emplace(id, Bucket::kCertain);
  for (const std::string& id : p.uncertain) {
    if (!bucket_of.emplace(id, Bucket::kUncertain).second) {
      throw ValidationError("id '" + id + "' is both certain and uncertain");
    }
  }
  if (bucket_of.size() != d.items.size()) {
    throw ValidationError("partition covers " + std::to_string(bucket_of.size()) +
                          " ids but dataset has " + std::to_string(d.items.size()));
  }

  Prng rng(seed);
  BuildSummary local;
  std::string out;
  for (const QAItem& item : d.items) {
    auto it = bucket_of.find(item.id);
    if (it == bucket_of.end()) {
      throw ValidationError("dataset id '" + item.id + "' missing from partition");
    }
    const TrainingRecord record = strategy == Strategy::kPadding
                                      ? pad_record(item, it->second == Bucket::kCertain, tmpl)
                                      : replace_record(item, it->second, rng, tmpl);
    out += to_json(record).dump();
    out.push_back('\n');
    ++local.records;
    ++(it->second == Bucket::kCertain ? local.certain : local.uncertain);
  }
  local.sha256 = sha256_hex(out);
  if (summary) *summary = local;
  return out;
}

BuildSummary build_training_file(const Dataset& d, const Partition& p, Strategy strategy,
                                 uint64_t seed, const std::filesystem::path& out,
                                 const PromptTemplate& tmpl) {
  BuildSummary summary;
  write_file(out, build_training_jsonl(d, p, strategy, seed, &summary, tmpl));
  return summary;
}

}  // namespace refusal
