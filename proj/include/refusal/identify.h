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

#ifndef REFUSAL_IDENTIFY_H_
#define REFUSAL_IDENTIFY_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "refusal/corpus.h"
#include "refusal/gateway.h"

namespace refusal {

inline constexpr size_t kDefaultMatchWindow = 32;

enum class IdentificationMethod { kSupervised, kUnsupervised };

std::string_view to_string(IdentificationMethod method);

struct IdentificationEvidence {
  std::optional<std::string> prediction;
  std::optional<bool> matched;
  std::optional<std::vector<std::string>> samples;
  std::optional<double> entropy;
};

struct UnresolvedItem {
  std::string id;
  std::string error;
};

// Split of a dataset into certain (D1) and uncertain (D0) item ids. Items
// whose model calls failed are listed in `unresolved`, never in either set.
struct Partition {
  std::vector<std::string> certain;
  std::vector<std::string> uncertain;
  std::vector<UnresolvedItem> unresolved;
  std::map<std::string, IdentificationEvidence> evidence;
  IdentificationMethod method = IdentificationMethod::kSupervised;
  nlohmann::json parameters = nlohmann::json::object();
};

nlohmann::json to_json(const Partition& p);
Partition partition_from_json(const nlohmann::json& doc);
Partition load_partition(const std::filesystem::path& path);
void save_partition(const Partition& p, const std::filesystem::path& path);

// Throws ValidationError when the partition has unresolved items and
// `allow_partial` is false.
void require_resolved(const Partition& p, bool allow_partial);

// QA: normalized gold is a substring of the normalized first `window`
// whitespace tokens of the generation. Multiple choice: the first token of
// the generation, stripped of punctuation, equals the gold letter
// (case-insensitive).
bool match_answer(std::string_view generation, std::string_view gold,
                  TaskKind kind, size_t window = kDefaultMatchWindow);

// -sum_j p_j ln p_j over distinct normalized answers (natural log).
double answer_entropy(const std::vector<std::string>& samples,
                      size_t window = kDefaultMatchWindow);

struct SupervisedOptions {
  size_t window = kDefaultMatchWindow;
  int qa_max_tokens = 32;
  int mc_max_tokens = 1;
  PromptTemplate prompt_template;
};

// One greedy inference per item; a match puts the item in D1.
Partition supervised_split(const ModelHandle& m, const Dataset& d,
                           const SupervisedOptions& options = {});

// What unsupervised identification may see of an item: no gold label.
struct QuestionView {
  std::string id;
  std::string prompt;
  TaskKind task_kind = TaskKind::kQa;
};

std::vector<QuestionView> question_views(const Dataset& d,
                                         const PromptTemplate& tmpl = {});

struct UnsupervisedOptions {
  int k = 10;
  double temperature = 0.7;
  double uncertain_fraction = 0.5;
  size_t window = kDefaultMatchWindow;
  int qa_max_tokens = 32;
  int mc_max_tokens = 1;
};

// Indices of the ceil(fraction * n) highest-entropy entries, ranked by a
// stable descending sort (input order breaks ties).
std::vector<size_t> rank_and_cut(const std::vector<double>& entropies,
                                 double uncertain_fraction);

// k samples per question; the most uncertain fraction by answer entropy
// becomes D0.
Partition unsupervised_split(const ModelHandle& m,
                             std::span<const QuestionView> questions,
                             const UnsupervisedOptions& options = {});

}  // namespace refusal

#endif  // REFUSAL_IDENTIFY_H_
