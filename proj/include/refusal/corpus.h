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

#ifndef REFUSAL_CORPUS_H_
#define REFUSAL_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace refusal {

enum class TaskKind { kQa, kMultipleChoice };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct Choice {
  std::string letter;
  std::string text;
  bool operator==(const Choice&) const = default;
};

// One canonical question/answer record.
struct QAItem {
  std::string id;
  std::string question;
  std::optional<std::string> context;
  std::vector<Choice> choices;
  // Gold label; a bare letter for multiple choice. Absent only when
  // answerable is false.
  std::optional<std::string> answer;
  std::optional<std::string> domain;
  TaskKind task_kind = TaskKind::kQa;
  bool answerable = true;

  bool operator==(const QAItem&) const = default;
};

// A line that could not be turned into a QAItem.
struct ParseIssue {
  size_t line = 0;
  std::string message;
  bool operator==(const ParseIssue&) const = default;
};

struct Provenance {
  std::vector<std::string> sources;
  std::string schema;
  // Free-form operations applied after parsing ("sample n=.. seed=..").
  std::vector<std::string> operations;
  bool operator==(const Provenance&) const = default;
};

struct Dataset {
  std::string name;
  std::vector<QAItem> items;
  Provenance provenance;
  std::vector<ParseIssue> issues;

  bool operator==(const Dataset&) const = default;
  const QAItem* find(std::string_view id) const;
};

enum class Schema { kQaJsonl, kMcJsonl, kNliAsMc, kCanonical };

std::string_view to_string(Schema schema);
Schema parse_schema(std::string_view text);

struct ParseOptions {
  // Throw on the first malformed line instead of collecting it in
  // Dataset::issues.
  bool strict = true;
  // Dataset name; defaults to the file stem.
  std::optional<std::string> name;
};

// Question strings used when NLI records are rendered as multiple choice.
inline constexpr std::string_view kWiceQuestion =
    "Does the evidence support the claim?";
inline constexpr std::string_view kFeverQuestion =
    "Does the evidence support or refute the claim or not enough information?";

// Parses a JSONL benchmark file.
//
// qa_jsonl:   {"question", "answer"?, "context"?, "domain"?, "answerable"?, "id"?}
//             "answer" may be a string or a non-empty list (first entry is
//             gold). Items with answerable=false may omit the answer.
// mc_jsonl:   {"question", "choices": [text...], "answer": index | letter, ...}
// nli_as_mc:  {"evidence", "claim", "label", "id"?} with WiCE labels
//             (supported / partially_supported / not_supported) or FEVER
//             labels (SUPPORTS / REFUTES / NOT ENOUGH INFO).
// canonical:  records written by write_canonical_jsonl.
//
// Missing ids default to "<name>-<line>". Throws ParseError when the file is
// unreadable, when no valid record exists, and (strict mode) on the first
// malformed line, naming its line number.
Dataset parse_dataset(const std::filesystem::path& path, Schema schema,
                      const ParseOptions& options = {});

// Same as parse_dataset but from in-memory text.
Dataset parse_dataset_text(std::string_view text, Schema schema,
                           const ParseOptions& options);

nlohmann::ordered_json to_json(const QAItem& item);
QAItem item_from_json(const nlohmann::json& record);

// One record per line, "\n" terminated, UTF-8, keys in QAItem field order.
std::string to_canonical_jsonl(const Dataset& dataset);
void write_canonical_jsonl(const Dataset& dataset,
                           const std::filesystem::path& path);

// n distinct items drawn uniformly without replacement, in draw order.
// Throws ValidationError when n > |items|.
Dataset sample_subset(const Dataset& dataset, size_t n, uint64_t seed);

struct DomainSplit {
  Dataset train;
  Dataset id_test;
  Dataset ood_test;
};

// Items whose domain is in `id_domains` are shuffled with the seeded
// permutation; the first floor(train_fraction * n_id) go to train and the
// rest to id_test. All other items form ood_test. Each output keeps file
// order. Throws ValidationError on missing tags or unknown id_domains.
DomainSplit domain_split(const Dataset& dataset,
                         const std::vector<std::string>& id_domains,
                         double train_fraction, uint64_t seed);

// Drops items whose (question, context, answer) repeats an earlier item.
Dataset dedupe_exact(const Dataset& dataset);

// Validates QAItem invariants and id uniqueness. Throws ValidationError.
void validate(const Dataset& dataset);

// Prompt layout shared by identification, construction and evaluation.
struct PromptTemplate {
  std::string context_prefix = "Context: ";
  std::string question_prefix = "Question: ";
  std::string answer_prefix = "\nAnswer: ";

  bool operator==(const PromptTemplate&) const = default;
};

PromptTemplate load_template(const std::filesystem::path& path);

// "{context_prefix}{context}\n" (when present), then
// "{question_prefix}{question}", then "\n(A) t (B) t ..." for multiple
// choice.
std::string render_question(const QAItem& item,
                            const PromptTemplate& tmpl = {});

// render_question followed by the answer prefix ("\nAnswer: ").
std::string render_prompt(const QAItem& item, const PromptTemplate& tmpl = {});

}  // namespace refusal

#endif  // REFUSAL_CORPUS_H_
