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

#include "refusal/analyze.h"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "refusal/error.h"
#include "refusal/text.h"

namespace refusal {

namespace {

std::optional<double> mean_of(const std::map<std::string, double>& values,
                              const std::vector<std::string>& ids) {
  double sum = 0.0;
  size_t n = 0;
  for (const std::string& id : ids) {
    auto it = values.find(id);
    if (it == values.end()) continue;
    sum += it->second;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

nlohmann::json nullable(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

double perplexity(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw ValidationError("perplexity of an empty token list");
  double sum = 0.0;
  for (double lp : token_logprobs) {
    if (lp > 0.0) throw ValidationError("logprob > 0");
    sum += lp;
  }
  return std::exp(-sum / static_cast<double>(token_logprobs.size()));
}

GroupMeans group_means(const std::map<std::string, double>& values, const Partition& p) {
  return {mean_of(values, p.certain), mean_of(values, p.uncertain)};
}

PerplexityReport dataset_perplexity(const ModelHandle& m, const Dataset& d, const Partition& p,
                                    const PerplexityOptions& options) {
  PerplexityReport report;
  report.model_name = m.model_name();
  auto keyed = parallel_keyed<double>(
      d.items.size(), m.limits().max_concurrent, [&](size_t i) {
        const QAItem& item = d.items[i];
        std::string text = render_question(item, options.prompt_template);
        if (options.include_answer && item.answer) {
          text += options.prompt_template.answer_prefix + *item.answer;
        }
        std::vector<double> lps;
        for (const TokenLogprob& t : score_prompt(m, text)) {
          if (t.logprob) lps.push_back(*t.logprob);
        }
        return perplexity(lps);
      });
  for (size_t i = 0; i < keyed.size(); ++i) {
    if (!keyed[i].ok() && keyed[i].error->kind == ErrorKind::kCapability) {
      throw CapabilityError(keyed[i].error->message);
    }
    if (keyed[i].ok()) {
      report.per_item.emplace(d.items[i].id, *keyed[i].value);
    } else {
      report.unresolved.push_back({d.items[i].id, keyed[i].error->message});
    }
  }
  report.group_means = group_means(report.per_item, p);
  return report;
}

EntropyReport entropy_report(const ModelHandle& m, const Dataset& d, const Partition& p,
                             const EntropyOptions& options) {
  if (options.k < 2) throw ValidationError("entropy report needs k >= 2");
  if (!(options.temperature > 0.0)) throw ValidationError("entropy report needs temperature > 0");
  std::vector<std::pair<std::string, CompletionRequest>> requests;
  for (const QAItem& item : d.items) {
    CompletionRequest r;
    if (options.prompt_template.empty()) {
      r.prompt = render_prompt(item);
    } else {
      r.prompt = options.prompt_template;
      const std::string question = render_question(item);
      for (size_t at = r.prompt.find("{question}"); at != std::string::npos;
           at = r.prompt.find("{question}", at + question.size())) {
        r.prompt.replace(at, 10, question);
      }
    }
    r.max_tokens = item.task_kind == TaskKind::kQa ? options.max_tokens : 1;
    r.temperature = options.temperature;
    r.n_samples = options.k;
    requests.emplace_back(item.id, std::move(r));
  }
  const auto results = run_batch(m, requests);

  EntropyReport report;
  report.model_name = m.model_name();
  report.k = options.k;
  report.temperature = options.temperature;
  for (const QAItem& item : d.items) {
    const BatchResult& result = results.at(item.id);
    if (!result.ok()) {
      report.unresolved.push_back({item.id, result.error->message});
      continue;
    }
    std::vector<std::string> samples;
    for (const Completion& c : *result.value) samples.push_back(c.text);
    report.per_item.emplace(item.id, answer_entropy(samples));
  }
  report.group_means = group_means(report.per_item, p);
  return report;
}

std::vector<HistogramBin> confidence_histogram(
    const std::vector<std::pair<std::string, double>>& values, size_t bins) {
  if (bins == 0) throw ValidationError("histogram needs at least one bin");
  std::vector<HistogramBin> out(bins);
  for (size_t i = 0; i < bins; ++i) {
    out[i].lower = static_cast<double>(i) / static_cast<double>(bins);
    out[i].upper = static_cast<double>(i + 1) / static_cast<double>(bins);
  }
  for (const auto& [id, v] : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError("confidence of '" + id + "' is outside [0, 1]: " + fmt(v));
    }
    auto index = static_cast<size_t>(v * static_cast<double>(bins));
    if (index >= bins) index = bins - 1;
    ++out[index].count;
  }
  return out;
}

std::string histogram_csv(const std::vector<HistogramBin>& bins) {
  std::string out = "lower,upper,count\n";
  for (const HistogramBin& b : bins) {
    out += fmt(b.lower) + "," + fmt(b.upper) + "," + std::to_string(b.count) + "\n";
  }
  return out;
}

std::string per_item_csv(const std::map<std::string, double>& values, const Partition& p,
                         const std::string& value_column) {
  std::map<std::string, std::string> bucket;
  for (const std::string& id : p.certain) bucket[id] = "certain";
  for (const std::string& id : p.uncertain) bucket[id] = "uncertain";
  std::string out = "id,bucket," + value_column + "\n";
  for (const auto& [id, v] : values) {
    auto it = bucket.find(id);
    out += csv_field(id) + "," + (it == bucket.end() ? "unassigned" : it->second) + "," + fmt(v) + "\n";
  }
  return out;
}

nlohmann::ordered_json to_json(const PerplexityReport& r) {
  nlohmann::ordered_json out;
  out["report"] = "perplexity";
  out["model"] = r.model_name;
  out["items"] = r.per_item.size();
  out["unresolved"] = r.unresolved.size();
  out["mean_certain"] = nullable(r.group_means.certain);
  out["mean_uncertain"] = nullable(r.group_means.uncertain);
  return out;
}

nlohmann::ordered_json to_json(const EntropyReport& r) {
  nlohmann::ordered_json out;
  out["report"] = "entropy";
  out["model"] = r.model_name;
  out["k"] = r.k;
  out["temperature"] = r.temperature;
  out["items"] = r.per_item.size();
  out["unresolved"] = r.unresolved.size();
  out["mean_certain"] = nullable(r.group_means.certain);
  out["mean_uncertain"] = nullable(r.group_means.uncertain);
  return out;
}

}  // namespace refusal
