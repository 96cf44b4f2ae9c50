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

#ifndef REFUSAL_SYNTHETIC_MODEL_H_
#define REFUSAL_SYNTHETIC_MODEL_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refusal/gateway.h"

namespace refusal {

// Certainty-probe sentence shared by training-data construction and
// evaluation. Training completions end "<probe> sure" / "<probe> unsure";
// evaluation appends the probe and scores " sure" vs " unsure".
inline constexpr std::string_view kCertaintyProbe =
    "Are you sure you accurately answered the question based on your internal "
    "knowledge? I am";

struct Fact {
  std::string id;
  std::string question;
  std::string answer;
  double familiarity = 1.0;
  std::vector<std::string> distractors;
};

// The synthetic model's parametric knowledge.
struct KnowledgeTable {
  std::vector<Fact> facts;
  uint64_t seed = 0;

  // Throws ValidationError: familiarity in [0,1], >= 1 distractor per fact,
  // unique ids and question texts.
  void validate() const;
};

// JSONL, one fact per line:
// {"id", "question", "answer", "familiarity", "distractors": [...]}
KnowledgeTable load_knowledge_table(const std::filesystem::path& path, uint64_t seed);
std::string to_jsonl(const KnowledgeTable& table);

enum class RefusalPolicy {
  // Never refuses; unfamiliar questions get distractors.
  kNever,
  // Emits the refusal text wherever it would otherwise emit a distractor.
  kRefuseUnfamiliar,
  // Emits the refusal text for every answer prompt.
  kAlways,
};

struct SyntheticOptions {
  RefusalPolicy refusal_policy = RefusalPolicy::kNever;
  std::string refusal_text = "I don’t know.";
};

// Tokens are maximal runs of leading whitespace followed by non-whitespace;
// trailing whitespace is a token of its own. Tokens concatenate to the text.
std::vector<std::string> synthetic_tokenize(std::string_view text);

// Deterministic in-process language model driven by a KnowledgeTable.
//
// A prompt is attributed to a fact by the text after its last "Question: "
// up to the first "\n(A) " or "\nAnswer:" (exact match on the fact's
// question). With familiarity f and m distractors:
//   - answer prompts (ending "Answer:") emit the gold answer with probability
//     f and each distractor with (1 - f) / m; greedy decoding takes the
//     argmax, preferring gold on ties. Unattributed prompts emit a pseudo-word
//     hallucination derived from the seed.
//   - probe prompts (ending in kCertaintyProbe) emit " sure" with probability
//     f and " unsure" with 1 - f; unattributed prompts count as f = 0.
//   - a generated answer of total probability p spread over T tokens reports
//     ln(p) / T per token.
//   - every other (prompt) token scores ln(0.1 + 0.8 f).
// Sample i of a request draws from a stream seeded by (seed, fact id, i).
class SyntheticModel {
 public:
  explicit SyntheticModel(KnowledgeTable table, SyntheticOptions options = {});

  std::vector<Completion> synthesize(const CompletionRequest& request) const;

  // Log-probability of `token` as the next token after `prefix`.
  double token_logprob(std::string_view prefix, std::string_view token) const;
  // Same, with the fact already attributed from the whole prompt.
  double token_logprob(std::string_view prefix, std::string_view token, const Fact* fact) const;

  const Fact* attribute(std::string_view prompt) const;
  const KnowledgeTable& table() const { return table_; }
  const SyntheticOptions& options() const { return options_; }

  // Probability mass floor for impossible outcomes (keeps logprobs finite).
  static constexpr double kFloor = 1e-30;

 private:
  struct Outcome {
    std::string text;
    double probability;
  };
  std::vector<Outcome> answer_distribution(const Fact* fact,
                                           std::string_view question) const;
  Completion generate(const CompletionRequest& request, int sample) const;

  KnowledgeTable table_;
  SyntheticOptions options_;
  std::map<std::string, size_t, std::less<>> by_question_;
};

// Extracts the question segment used for attribution; empty if none.
std::string_view extract_question(std::string_view prompt);

// CompletionBackend over a SyntheticModel with instrumentation for tests:
// in-flight/peak counters, an optional per-call latency, and a fault marker
// (prompts containing it throw TransportError).
class SyntheticBackend : public CompletionBackend {
 public:
  explicit SyntheticBackend(SyntheticModel model) : model_(std::move(model)) {}

  std::vector<Completion> complete(const CompletionRequest& r) override;

  void set_latency(std::chrono::microseconds latency) { latency_ = latency; }
  void set_fault_marker(std::string marker) { fault_marker_ = std::move(marker); }
  // The next `n` calls throw TransportError before doing any work.
  void fail_next(int n) { pending_failures_ = n; }
  // Reject logprob requests with CapabilityError, like a text-only backend.
  void set_text_only(bool text_only) { text_only_ = text_only; }

  int peak_in_flight() const { return peak_; }
  int calls() const { return calls_; }
  const SyntheticModel& model() const { return model_; }

 private:
  SyntheticModel model_;
  std::chrono::microseconds latency_{0};
  std::string fault_marker_;
  bool text_only_ = false;
  std::atomic<int> pending_failures_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
  std::atomic<int> calls_{0};
};

ModelHandle make_synthetic_model(std::shared_ptr<SyntheticBackend> backend,
                                 RequestLimits limits = {},
                                 std::string model_name = "synthetic");
ModelHandle make_synthetic_model(KnowledgeTable table, SyntheticOptions options = {},
                                 RequestLimits limits = {});

}  // namespace refusal

#endif  // REFUSAL_SYNTHETIC_MODEL_H_
