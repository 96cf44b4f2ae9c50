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

#include "refusal/synthetic_model.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <thread>

#include "json.hpp"
#include "refusal/digest.h"
#include "refusal/prng.h"
#include "refusal/text.h"

namespace refusal {

using json = nlohmann::json;

namespace {

constexpr std::string_view kQuestionMarker = "Question: ";
constexpr std::string_view kAnswerMarker = "Answer:";
constexpr int kHallucinationPool = 4;

std::string pseudo_word(uint64_t h) {
  static constexpr std::string_view kSyllables[] = {
      "ka", "zo", "ri", "mun", "tel", "vas", "dor", "pli", "qua", "nex", "bru", "sen"};
  std::string word;
  for (int i = 0; i < 3; ++i) {
    word += kSyllables[h % std::size(kSyllables)];
    h = mix64(h);
  }
  word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
  return word;
}

}  // namespace

void KnowledgeTable::validate() const {
  std::set<std::string> ids;
  std::set<std::string> questions;
  for (const Fact& fact : facts) {
    if (!(fact.familiarity >= 0.0 && fact.familiarity <= 1.0)) {
      throw ValidationError("fact '" + fact.id + "': familiarity outside [0, 1]");
    }
    if (fact.distractors.empty()) {
      throw ValidationError("fact '" + fact.id + "' has no distractor");
    }
    if (!ids.insert(fact.id).second) throw ValidationError("duplicate fact id '" + fact.id + "'");
    if (!questions.insert(fact.question).second) {
      throw ValidationError("duplicate fact question for '" + fact.id + "'");
    }
  }
}

KnowledgeTable load_knowledge_table(const std::filesystem::path& path, uint64_t seed) {
  KnowledgeTable table;
  table.seed = seed;
  const std::string text = read_file(path);
  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string_view line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json record = json::parse(line);
      Fact fact;
      fact.id = record.at("id").get<std::string>();
      fact.question = record.at("question").get<std::string>();
      fact.answer = record.at("answer").get<std::string>();
      fact.familiarity = record.value("familiarity", 1.0);
      fact.distractors = record.at("distractors").get<std::vector<std::string>>();
      table.facts.push_back(std::move(fact));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  table.validate();
  return table;
}

std::string to_jsonl(const KnowledgeTable& table) {
  std::string out;
  for (const Fact& fact : table.facts) {
    nlohmann::ordered_json record;
    record["id"] = fact.id;
    record["question"] = fact.question;
    record["answer"] = fact.answer;
    record["familiarity"] = fact.familiarity;
    record["distractors"] = fact.distractors;
    out += record.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<std::string> synthetic_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  while (i < text.size()) {
    const size_t start = i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

std::string_view extract_question(std::string_view prompt) {
  const size_t start = prompt.rfind(kQuestionMarker);
  if (start == std::string_view::npos) return {};
  std::string_view rest = prompt.substr(start + kQuestionMarker.size());
  size_t end = std::min(rest.find("\n(A) "), rest.find("\nAnswer:"));
  if (end == std::string_view::npos) end = rest.find('\n');
  return rest.substr(0, end);
}

SyntheticModel::SyntheticModel(KnowledgeTable table, SyntheticOptions options)
    : table_(std::move(table)), options_(std::move(options)) {
  table_.validate();
  for (size_t i = 0; i < table_.facts.size(); ++i) {
    by_question_.emplace(table_.facts[i].question, i);
  }
}

const Fact* SyntheticModel::attribute(std::string_view prompt) const {
  const std::string_view question = extract_question(prompt);
  auto it = by_question_.find(question);
  return it == by_question_.end() ? nullptr : &table_.facts[it->second];
}

std::vector<SyntheticModel::Outcome> SyntheticModel::answer_distribution(
    const Fact* fact, std::string_view question) const {
  if (options_.refusal_policy == RefusalPolicy::kAlways) {
    return {{options_.refusal_text, 1.0}};
  }
  const bool refuse = options_.refusal_policy == RefusalPolicy::kRefuseUnfamiliar;
  std::vector<Outcome> out;
  if (fact) {
    const double f = fact->familiarity;
    out.push_back({fact->answer, f});
    if (refuse) {
      out.push_back({options_.refusal_text, 1.0 - f});
    } else {
      const double each = (1.0 - f) / static_cast<double>(fact->distractors.size());
      for (const std::string& d : fact->distractors) out.push_back({d, each});
    }
    return out;
  }
  if (refuse) return {{options_.refusal_text, 1.0}};
  const uint64_t h = derive_seed(table_.seed, question, 0);
  for (int i = 0; i < kHallucinationPool; ++i) {
    out.push_back({pseudo_word(mix64(h + static_cast<uint64_t>(i))), 1.0 / kHallucinationPool});
  }
  return out;
}

double SyntheticModel::token_logprob(std::string_view prefix, std::string_view token) const {
  return token_logprob(prefix, token, attribute(prefix));
}

double SyntheticModel::token_logprob(std::string_view prefix, std::string_view token,
                                     const Fact* fact) const {
  const std::string_view context = rtrim(prefix);
  const double f = fact ? fact->familiarity : 0.0;
  const std::string_view word = trim(token);
  if (ends_with(context, kCertaintyProbe)) {
    if (word == "sure") return std::log(std::max(f, kFloor));
    if (word == "unsure") return std::log(std::max(1.0 - f, kFloor));
    return std::log(kFloor);
  }
  if (ends_with(context, kAnswerMarker)) {
    for (const Outcome& o : answer_distribution(fact, extract_question(prefix))) {
      if (trim(o.text) == word) return std::log(std::max(o.probability, kFloor));
    }
    return std::log(kFloor);
  }
  return std::log(0.1 + 0.8 * f);
}

Completion SyntheticModel::generate(const CompletionRequest& request, int sample) const {
  const std::string_view prompt = request.prompt;
  const Fact* fact = attribute(prompt);
  const std::string_view question = extract_question(prompt);

  std::vector<Outcome> outcomes;
  std::string stream_key;
  if (ends_with(rtrim(prompt), kCertaintyProbe)) {
    const double f = fact ? fact->familiarity : 0.0;
    outcomes = {{" sure", f}, {" unsure", 1.0 - f}};
    stream_key = "probe:" + (fact ? fact->id : std::string(question));
  } else {
    outcomes = answer_distribution(fact, question);
    stream_key = fact ? fact->id : std::string(question);
    if (!prompt.empty() && !std::isspace(static_cast<unsigned char>(prompt.back()))) {
      for (Outcome& o : outcomes) o.text = " " + o.text;
    }
  }

  size_t pick = 0;
  if (request.temperature == 0.0) {
    for (size_t i = 1; i < outcomes.size(); ++i) {
      if (outcomes[i].probability > outcomes[pick].probability) pick = i;
    }
  } else {
    Prng rng(derive_seed(table_.seed, stream_key, static_cast<uint64_t>(sample)));
    const double u = rng.uniform01();
    double cumulative = 0.0;
    pick = outcomes.size() - 1;
    for (size_t i = 0; i < outcomes.size(); ++i) {
      cumulative += outcomes[i].probability;
      if (u < cumulative) {
        pick = i;
        break;
      }
    }
  }

  std::string text = outcomes[pick].text;
  for (const std::string& stop : request.stop) {
    if (stop.empty()) continue;
    const size_t at = text.find(stop);
    if (at != std::string::npos) text.resize(at);
  }
  auto pieces = synthetic_tokenize(outcomes[pick].text);
  const double per_token =
      std::log(std::max(outcomes[pick].probability, kFloor)) /
      static_cast<double>(std::max<size_t>(1, pieces.size()));

  Completion c;
  pieces = synthetic_tokenize(text);
  if (pieces.size() > static_cast<size_t>(request.max_tokens)) {
    pieces.resize(static_cast<size_t>(request.max_tokens));
    c.truncated = true;
  }
  std::string generated;
  for (const std::string& p : pieces) generated += p;

  if (request.echo) {
    const auto prompt_tokens = synthetic_tokenize(prompt);
    size_t offset = 0;
    for (size_t i = 0; i < prompt_tokens.size(); ++i) {
      TokenLogprob t{prompt_tokens[i], std::nullopt};
      if (i > 0) t.logprob = token_logprob(prompt.substr(0, offset), prompt_tokens[i], fact);
      offset += prompt_tokens[i].size();
      c.tokens.push_back(std::move(t));
    }
    c.text = std::string(prompt);
  }
  for (const std::string& p : pieces) c.tokens.push_back({p, per_token});
  c.text += generated;
  if (!request.logprobs) c.tokens.clear();
  return c;
}

std::vector<Completion> SyntheticModel::synthesize(const CompletionRequest& request) const {
  request.validate();
  std::vector<Completion> out;
  out.reserve(static_cast<size_t>(request.n_samples));
  for (int i = 0; i < request.n_samples; ++i) out.push_back(generate(request, i));
  return out;
}

std::vector<Completion> SyntheticBackend::complete(const CompletionRequest& r) {
  ++calls_;
  const int now = ++in_flight_;
  int peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
  struct Leave {
    std::atomic<int>& counter;
    ~Leave() { --counter; }
  } leave{in_flight_};

  if (latency_.count() > 0) std::this_thread::sleep_for(latency_);
  if (pending_failures_.load() > 0 && pending_failures_.fetch_sub(1) > 0) {
    throw TransportError("synthetic transient fault");
  }
  if (!fault_marker_.empty() && r.prompt.find(fault_marker_) != std::string::npos) {
    throw TransportError("synthetic fault for marked prompt");
  }
  if (text_only_ && r.logprobs) throw CapabilityError("backend does not provide logprobs");
  return model_.synthesize(r);
}

ModelHandle make_synthetic_model(std::shared_ptr<SyntheticBackend> backend,
                                 RequestLimits limits, std::string model_name) {
  return ModelHandle(BackendKind::kInProcessSynthetic, std::move(model_name),
                     std::move(backend), limits);
}

ModelHandle make_synthetic_model(KnowledgeTable table, SyntheticOptions options,
                                 RequestLimits limits) {
  return make_synthetic_model(
      std::make_shared<SyntheticBackend>(SyntheticModel(std::move(table), std::move(options))),
      limits);
}

}  // namespace refusal
