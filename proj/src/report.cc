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

#include "refusal/report.h"

#include <iomanip>
#include <sstream>

#include "refusal/error.h"

namespace refusal {

using json = nlohmann::json;

namespace {

std::optional<double> number(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) throw ParseError(std::string("summary field '") + key + "' is not a number");
  return it->get<double>();
}

std::string cell(const std::optional<double>& v, int digits, double scale) {
  if (!v) return "-";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << (*v * scale);
  return s.str();
}

std::string percent(const std::optional<double>& v) { return cell(v, 2, 100.0); }

}  // namespace

MethodRow row_from_summary(const std::string& label, const json& summary) {
  if (!summary.is_object()) throw ParseError("summary for '" + label + "' is not an object");
  MethodRow row;
  row.label = label;
  row.ap = number(summary, "ap");
  row.accuracy = number(summary, "accuracy_lexicon");
  row.answer_rate = number(summary, "answer_rate_lexicon");
  row.accuracy_certainty = number(summary, "accuracy_certainty");
  row.answer_rate_certainty = number(summary, "answer_rate_certainty");
  row.refusal_rate = number(summary, "refusal_rate");
  return row;
}

std::string render_method_table(const std::vector<MethodRow>& rows) {
  std::string out =
      "| Method | AP (%) | Accuracy (%) | Answer rate (%) | Accuracy@theta (%) | "
      "Answer rate@theta (%) | Refusal rate (%) |\n"
      "|---|---:|---:|---:|---:|---:|---:|\n";
  for (const MethodRow& r : rows) {
    out += "| " + r.label + " | " + percent(r.ap) + " | " + percent(r.accuracy) + " | " +
           percent(r.answer_rate) + " | " + percent(r.accuracy_certainty) + " | " +
           percent(r.answer_rate_certainty) + " | " + percent(r.refusal_rate) + " |\n";
  }
  return out;
}

std::string render_group_table(const std::vector<GroupRow>& rows, int digits) {
  std::string out = "| Dataset | Model | D1 | D0 |\n|---|---|---:|---:|\n";
  for (const GroupRow& r : rows) {
    out += "| " + r.dataset + " | " + r.model + " | " + cell(r.certain, digits, 1.0) + " | " +
           cell(r.uncertain, digits, 1.0) + " |\n";
  }
  return out;
}

std::string render_refusal_table(const std::vector<RefusalRow>& rows) {
  std::string out = "| Dataset | Model | Refusal rate (%) |\n|---|---|---:|\n";
  for (const RefusalRow& r : rows) {
    out += "| " + r.dataset + " | " + r.model + " | " + percent(r.rate) + " |\n";
  }
  return out;
}

}  // namespace refusal
