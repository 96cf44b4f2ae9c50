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

#ifndef REFUSAL_ANALYZE_H_
#define REFUSAL_ANALYZE_H_

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "refusal/corpus.h"
#include "refusal/gateway.h"
#include "refusal/identify.h"

namespace refusal {

// exp(-mean(logprobs)). Throws ValidationError on an empty list or a
// positive logprob.
double perplexity(std::span<const double> token_logprobs);

struct GroupMeans {
  // Mean over D1 / D0 items that were scored; absent for an empty group.
  std::optional<double> certain;
  std::optional<double> uncertain;
};

struct PerplexityReport {
  std::map<std::string, double> per_item;
  GroupMeans group_means;
  std::string model_name;
  std::vector<UnresolvedItem> unresolved;
};

struct PerplexityOptions {
  // Score question plus gold answer instead of the question (and context).
  bool include_answer = false;
  PromptTemplate prompt_template;
};

// Perplexity of each item's context and question under the model, via
// prompt echo. Tokens the backend did not score (the first token) are
// skipped.
PerplexityReport dataset_perplexity(const ModelHandle& m, const Dataset& d, const Partition& p,
                                    const PerplexityOptions& options = {});

struct EntropyReport {
  std::map<std::string, double> per_item;
  GroupMeans group_means;
  std::string model_name;
  int k = 5;
  double temperature = 0.7;
  std::vector<UnresolvedItem> unresolved;
};

struct EntropyOptions {
  int k = 5;
  double temperature = 0.7;
  int max_tokens = 32;
  // "{question}" is replaced by the rendered question; empty means the
  // standard answer prompt.
  std::string prompt_template;
};

EntropyReport entropy_report(const ModelHandle& m, const Dataset& d, const Partition& p,
                             const EntropyOptions& options = {});

struct HistogramBin {
  double lower = 0.0;
  double upper = 0.0;
  size_t count = 0;
};

// Equal-width bins over [0, 1]; bin i holds [i/b, (i+1)/b) and the last bin
// is closed on the right. Throws ValidationError naming the id of any value
// outside [0, 1].
std::vector<HistogramBin> confidence_histogram(
    const std::vector<std::pair<std::string, double>>& values, size_t bins = 10);

std::string histogram_csv(const std::vector<HistogramBin>& bins);
std::string per_item_csv(const std::map<std::string, double>& values, const Partition& p,
                         const std::string& value_column);
nlohmann::ordered_json to_json(const PerplexityReport& r);
nlohmann::ordered_json to_json(const EntropyReport& r);

// Means over the ids of one bucket that appear in `values`.
GroupMeans group_means(const std::map<std::string, double>& values, const Partition& p);

}  // namespace refusal

#endif  // REFUSAL_ANALYZE_H_
