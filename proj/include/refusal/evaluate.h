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

#ifndef REFUSAL_EVALUATE_H_
#define REFUSAL_EVALUATE_H_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "refusal/corpus.h"
#include "refusal/gateway.h"
#include "refusal/identify.h"

namespace refusal {

enum class EvalMode { kRTuning, kVanilla, kVanillaC, kRefusalBench };

std::string_view to_string(EvalMode mode);
EvalMode parse_eval_mode(std::string_view text);

// Index convention for the average-precision sum.
//   kStandard:  sum_{k=1..n} (R(k) - R(k-1)) * P(k), R(0) = 0.
//   kShifted:   sum_{k=0..n-1} (R(k+1) - R(k)) * P(k), with P(0) = 1.
enum class APConvention { kStandard, kShifted };

std::string_view to_string(APConvention convention);
APConvention parse_ap_convention(std::string_view text);

// The 16 replacement expressions plus "do not know", "don't know",
// "not known", "impossible to know", "impossible to answer" and "unsure".
std::vector<std::string> default_refusal_lexicon();

inline constexpr std::string_view kDefaultRefusalPreamble =
    "Answer the following question. If you do not know the answer, you may "
    "refuse to answer.\n\n";

struct EvalConfig {
  // Weight on prediction confidence in the combined confidence.
  double w = 0.5;
  std::vector<std::string> refusal_lexicon = default_refusal_lexicon();
  int k_votes = 10;
  double vote_temperature = 0.7;
  size_t window = kDefaultMatchWindow;
  int qa_max_tokens = 32;
  // Certainty at or above which an answer counts as willing.
  double certainty_threshold = 0.5;
  // Prepended to prompts in refusal-bench mode when permit_refusal is set.
  std::string refusal_preamble = std::string(kDefaultRefusalPreamble);
  bool permit_refusal = true;
  APConvention ap_convention = APConvention::kStandard;
  PromptTemplate prompt_template;

  void validate() const;
};

struct EvalResult {
  std::string id;
  std::string prediction;
  bool correct = false;
  bool refused = false;
  double pred_conf = 0.0;
  double cert_conf = 0.0;
  double combined_conf = 0.0;
  std::string raw;
};

nlohmann::ordered_json to_json(const EvalResult& r);
EvalResult eval_result_from_json(const nlohmann::json& doc);
std::vector<EvalResult> load_eval_results(const std::filesystem::path& path);

struct AnswerPass {
  std::string prediction;
  double pred_conf = 0.0;
  Completion raw;
};

// Greedy answer. QA: pred_conf = exp(mean logprob of the tokens covering the
// prediction); the prediction is the generation up to the certainty probe,
// trimmed, without one trailing period. Multiple choice: argmax of
// choice_scores over the letters, pred_conf = its softmax share.
AnswerPass answer_pass(const ModelHandle& m, const QAItem& item, const EvalConfig& cfg = {});

// P(sure) / (P(sure) + P(unsure)) for the probe appended to question and
// prediction.
double certainty_probe(const ModelHandle& m, const QAItem& item, std::string_view prediction,
                       const PromptTemplate& tmpl = {});

// w * pred_conf + (1 - w) * cert_conf.
double combined_confidence(double pred_conf, double cert_conf, double w);

struct AccuracyReport {
  // Null when nothing was willingly answered.
  std::optional<double> accuracy;
  size_t willing = 0;
  size_t correct = 0;
  size_t total = 0;
  bool no_willing = false;
};

// Correct-and-willing over willing, where willing = not refused.
AccuracyReport accuracy(const std::vector<EvalResult>& results);

struct APPoint {
  size_t k = 0;
  double precision = 0.0;
  double recall = 0.0;
};

struct APCurve {
  std::vector<APPoint> points;
  double ap = 0.0;
  // No correct answer: recall is undefined and ap is reported as 0.
  bool degenerate = false;
};

// Ranks by combined_conf descending (ties by id ascending) and sweeps
// k = 1..n. Throws ValidationError on an empty input.
APCurve ap_score(const std::vector<EvalResult>& results,
                 APConvention convention = APConvention::kStandard);

struct Vote {
  std::string answer;
  double confidence = 0.0;
};

// Modal normalized answer and its frequency over k; ties go to the answer
// seen first. Requires |samples| == k >= 1.
Vote majority_vote_confidence(const std::vector<std::string>& samples, size_t k,
                              size_t window = kDefaultMatchWindow);

// Case-insensitive substring match against the lexicon after folding
// typographic apostrophes and whitespace; phrases match without their
// trailing punctuation.
bool is_refusal(std::string_view text, const std::vector<std::string>& lexicon);
bool is_refusal(std::string_view text);

struct RefusalReport {
  double rate = 0.0;
  size_t refused = 0;
  size_t total = 0;
  std::vector<EvalResult> results;
  std::vector<UnresolvedItem> unresolved;
};

// Fraction of items whose greedy generation is a refusal.
RefusalReport refusal_rate(const ModelHandle& m, const Dataset& d, const EvalConfig& cfg = {});

struct EvalRun {
  EvalMode mode = EvalMode::kRTuning;
  std::vector<EvalResult> results;
  std::vector<UnresolvedItem> unresolved;
  APCurve curve;
  nlohmann::ordered_json summary;
};

// Runs one evaluation protocol over a dataset and assembles the summary
// (accuracy and answer rate by lexicon and by certainty threshold, AP,
// refusal rate, and every parameter used).
EvalRun evaluate_dataset(const ModelHandle& m, const Dataset& d, EvalMode mode,
                         const EvalConfig& cfg = {});

std::string to_jsonl(const std::vector<EvalResult>& results);
std::string ap_curve_csv(const APCurve& curve);

}  // namespace refusal

#endif  // REFUSAL_EVALUATE_H_
