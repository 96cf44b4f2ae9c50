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

#ifndef REFUSAL_REPORT_H_
#define REFUSAL_REPORT_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace refusal {

// One method's headline numbers, as fractions in [0, 1].
struct MethodRow {
  std::string label;
  std::optional<double> ap;
  std::optional<double> accuracy;
  std::optional<double> answer_rate;
  std::optional<double> accuracy_certainty;
  std::optional<double> answer_rate_certainty;
  std::optional<double> refusal_rate;
};

// Reads an evaluation summary (as written by `evaluate`).
MethodRow row_from_summary(const std::string& label, const nlohmann::json& summary);

// Markdown table comparing methods; numbers are percentages with two
// decimals, missing values render as "-".
std::string render_method_table(const std::vector<MethodRow>& rows);

// D1-vs-D0 comparison row (perplexity or entropy).
struct GroupRow {
  std::string dataset;
  std::string model;
  std::optional<double> certain;
  std::optional<double> uncertain;
};

// Markdown table "| Dataset | Model | D1 | D0 |" with `digits` decimals.
std::string render_group_table(const std::vector<GroupRow>& rows, int digits);

struct RefusalRow {
  std::string dataset;
  std::string model;
  std::optional<double> rate;
};

std::string render_refusal_table(const std::vector<RefusalRow>& rows);

}  // namespace refusal

#endif  // REFUSAL_REPORT_H_
