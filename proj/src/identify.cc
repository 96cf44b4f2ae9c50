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

#include "refusal/identify.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "refusal/digest.h"
#include "refusal/error.h"
#include "refusal/text.h"

namespace refusal {

using json = nlohmann::json;

std::string_view to_string(IdentificationMethod method) {
  return method == IdentificationMethod::kSupervised ? "supervised" : "unsupervised";
}

bool match_answer(std::string_view generation, std::string_view gold, TaskKind kind,
                  size_t window) {
  if (kind == TaskKind::kMultipleChoice) {
    const auto tokens = split_whitespace(generation);
    if (tokens.empty()) return false;
    const std::string predicted = normalize_answer(tokens.front());
    return !predicted.empty() && predicted == to_lower_ascii(trim(gold));
  }
  const std::string needle = normalize_answer(gold);
  if (needle.empty()) return false;
  return normalize_answer(generation, window).find(needle) != std::string::npos;
}

double answer_entropy(const std::vector<std::string>& samples, size_t window) {
  if (samples.empty()) throw ValidationError("answer_entropy needs at least one sample");
  std::map<std::string, size_t> counts;
  for (const std::string& s : samples) ++counts[normalize_answer(s, window)];
  const double k = static_cast<double>(samples.size());
  double u = 0.0;
  for (const auto& [answer, count] : counts) {
    const double p = static_cast<double>(count) / k;
    u -= p * std::log(p);
  }
  return u == 0.0 ? 0.0 : u;  // no negative zero
}

json to_json(const Partition& p) {
  json evidence = json::object();
  for (const auto& [id, ev] : p.evidence) {
    json e = json::object();
    if (ev.prediction) e["prediction"] = *ev.prediction;
    if (ev.matched) e["matched"] = *ev.matched;
    if (ev.samples) e["samples"] = *ev.samples;
    if (ev.entropy) e["entropy"] = *ev.entropy;
    evidence[id] = std::move(e);
  }
  json unresolved = json::array();
  for (const UnresolvedItem& u : p.unresolved) {
    unresolved.push_back({{"id", u.id}, {"error", u.error}});
  }
  return json{{"method", to_string(p.method)},
              {"parameters", p.parameters},
              {"certain", p.certain},
              {"uncertain", p.uncertain},
              {"unresolved", unresolved},
              {"evidence", evidence}};
}

Partition partition_from_json(const json& doc) {
  Partition p;
  try {
    const std::string method = doc.at("method").get<std::string>();
    if (method == "supervised") {
      p.method = IdentificationMethod::kSupervised;
    } else if (method == "unsupervised") {
      p.method = IdentificationMethod::kUnsupervised;
    } else {
      throw ParseError("unknown partition method '" + method + "'");
    }
    p.parameters = doc.value("parameters", json::object());
    p.certain = doc.at("certain").get<std::vector<std::string>>();
    p.uncertain = doc.at("uncertain").get<std::vector<std::string>>();
    for (const json& u : doc.value("unresolved", json::array())) {
      p.unresolved.push_back({u.at("id").get<std::string>(), u.value("error", "")});
    }
    const json evidence = doc.value("evidence", json::object());
    for (const auto& [id, e] : evidence.items()) {
      IdentificationEvidence ev;
      if (e.contains("prediction")) ev.prediction = e["prediction"].get<std::string>();
      if (e.contains("matched")) ev.matched = e["matched"].get<bool>();
      if (e.contains("samples")) ev.samples = e["samples"].get<std::vector<std::string>>();
      if (e.contains("entropy")) ev.entropy = e["entropy"].get<double>();
      p.evidence.emplace(id, std::move(ev));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed partition: ") + e.what());
  }
  return p;
}

Partition load_partition(const std::filesystem::path& path) {
  try {
    return partition_from_json(json::parse(read_file(path)));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_partition(const Partition& p, const std::filesystem::path& path) {
  write_file(path, to_json(p).dump(2) + "\n");
}

void require_resolved(const Partition& p, bool allow_partial) {
  if (p.unresolved.empty() || allow_partial) return;
  throw ValidationError(std::to_string(p.unresolved.size()) +
                        " item(s) unresolved (first: " + p.unresolved.front().id + ": " +
                        p.unresolved.front().error + "); rerun or pass --allow-partial");
}

Partition supervised_split(const ModelHandle& m, const Dataset& d,
                           const SupervisedOptions& options) {
  std::vector<std::pair<std::string, CompletionRequest>> requests;
  requests.reserve(d.items.size());
  for (const QAItem& item : d.items) {
    if (!item.answer) throw ValidationError("item '" + item.id + "' has no gold answer");
    CompletionRequest r;
    r.prompt = render_prompt(item, options.prompt_template);
    r.max_tokens = item.task_kind == TaskKind::kQa ? options.qa_max_tokens
                                                   : options.mc_max_tokens;
    r.temperature = 0.0;
    requests.emplace_back(item.id, std::move(r));
  }
  const auto results = run_batch(m, requests);

  Partition p;
  p.method = IdentificationMethod::kSupervised;
  p.parameters = {{"window", options.window},
                  {"qa_max_tokens", options.qa_max_tokens},
                  {"mc_max_tokens", options.mc_max_tokens},
                  {"temperature", 0.0},
                  {"model", m.model_name()}};
  for (const QAItem& item : d.items) {
    const BatchResult& result = results.at(item.id);
    if (!result.ok()) {
      p.unresolved.push_back({item.id, result.error->message});
      continue;
    }
    const std::string& text = result.value->front().text;
    const bool matched = match_answer(text, *item.answer, item.task_kind, options.window);
    IdentificationEvidence ev;
    ev.prediction = text;
    ev.matched = matched;
    p.evidence.emplace(item.id, std::move(ev));
    (matched ? p.certain : p.uncertain).push_back(item.id);
  }
  return p;
}

std::vector<QuestionView> question_views(const Dataset& d, const PromptTemplate& tmpl) {
  std::vector<QuestionView> out;
  out.reserve(d.items.size());
  for (const QAItem& item : d.items) {
    out.push_back({item.id, render_prompt(item, tmpl), item.task_kind});
  }
  return out;
}

std::vector<size_t> rank_and_cut(const std::vector<double>& entropies,
                                 double uncertain_fraction) {
  if (!(uncertain_fraction >= 0.0 && uncertain_fraction <= 1.0)) {
    throw ValidationError("uncertain_fraction must lie in [0, 1]");
  }
  std::vector<size_t> order(entropies.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return entropies[a] > entropies[b]; });
  const auto cut = static_cast<size_t>(
      std::ceil(uncertain_fraction * static_cast<double>(entropies.size())));
  order.resize(std::min(cut, order.size()));
  return order;
}

Partition unsupervised_split(const ModelHandle& m, std::span<const QuestionView> questions,
                             const UnsupervisedOptions& options) {
  if (options.k < 2) throw ValidationError("unsupervised identification needs k >= 2");
  if (!(options.temperature > 0.0)) {
    throw ValidationError("unsupervised identification needs temperature > 0");
  }
  std::vector<std::pair<std::string, CompletionRequest>> requests;
  requests.reserve(questions.size());
  for (const QuestionView& q : questions) {
    CompletionRequest r;
    r.prompt = q.prompt;
    r.max_tokens = q.task_kind == TaskKind::kQa ? options.qa_max_tokens : options.mc_max_tokens;
    r.temperature = options.temperature;
    r.n_samples = options.k;
    requests.emplace_back(q.id, std::move(r));
  }
  const auto results = run_batch(m, requests);

  Partition p;
  p.method = IdentificationMethod::kUnsupervised;
  p.parameters = {{"k", options.k},
                  {"temperature", options.temperature},
                  {"uncertain_fraction", options.uncertain_fraction},
                  {"window", options.window},
                  {"model", m.model_name()}};
  std::vector<std::string> resolved;
  std::vector<double> entropies;
  for (const QuestionView& q : questions) {
    const BatchResult& result = results.at(q.id);
    if (!result.ok()) {
      p.unresolved.push_back({q.id, result.error->message});
      continue;
    }
    std::vector<std::string> samples;
    for (const Completion& c : *result.value) samples.push_back(c.text);
    const double u = answer_entropy(samples, options.window);
    IdentificationEvidence ev;
    ev.samples = samples;
    ev.entropy = u;
    p.evidence.emplace(q.id, std::move(ev));
    resolved.push_back(q.id);
    entropies.push_back(u);
  }
  std::vector<bool> is_uncertain(resolved.size(), false);
  for (size_t i : rank_and_cut(entropies, options.uncertain_fraction)) is_uncertain[i] = true;
  for (size_t i = 0; i < resolved.size(); ++i) {
    (is_uncertain[i] ? p.uncertain : p.certain).push_back(resolved[i]);
  }
  return p;
}

}  // namespace refusal
