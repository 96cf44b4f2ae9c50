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

#include "refusal/corpus.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <sstream>
#include <unordered_set>

#include "refusal/digest.h"
#include "refusal/error.h"
#include "refusal/prng.h"
#include "refusal/text.h"

namespace refusal {

using json = nlohmann::json;

namespace {

std::string letter_for(size_t index) {
  return std::string(1, static_cast<char>('A' + index));
}

std::optional<std::string> optional_string(const json& record,
                                           const char* key) {
  auto it = record.find(key);
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw ParseError(std::string("field '") + key + "' must be a string");
  }
  return it->get<std::string>();
}

std::string required_string(const json& record, const char* key) {
  auto value = optional_string(record, key);
  if (!value) throw ParseError(std::string("missing required field '") + key + "'");
  return *value;
}

std::optional<std::string> record_id(const json& record) {
  auto it = record.find("id");
  if (it == record.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<int64_t>());
  throw ParseError("field 'id' must be a string or integer");
}

QAItem parse_qa(const json& record) {
  QAItem item;
  item.task_kind = TaskKind::kQa;
  item.question = required_string(record, "question");
  item.context = optional_string(record, "context");
  item.domain = optional_string(record, "domain");
  if (auto it = record.find("answerable"); it != record.end()) {
    if (!it->is_boolean()) throw ParseError("field 'answerable' must be boolean");
    item.answerable = it->get<bool>();
  }
  if (auto it = record.find("answer"); it != record.end() && !it->is_null()) {
    if (it->is_string()) {
      item.answer = it->get<std::string>();
    } else if (it->is_array() && !it->empty() && (*it)[0].is_string()) {
      item.answer = (*it)[0].get<std::string>();
    } else {
      throw ParseError("field 'answer' must be a string or list of strings");
    }
  }
  if (item.answerable && (!item.answer || trim(*item.answer).empty())) {
    throw ParseError("missing required field 'answer'");
  }
  return item;
}

QAItem parse_mc(const json& record) {
  QAItem item;
  item.task_kind = TaskKind::kMultipleChoice;
  item.question = required_string(record, "question");
  item.context = optional_string(record, "context");
  item.domain = optional_string(record, "domain");
  auto choices = record.find("choices");
  if (choices == record.end()) choices = record.find("options");
  if (choices == record.end() || !choices->is_array() || choices->empty()) {
    throw ParseError("missing required field 'choices'");
  }
  if (choices->size() > 26) throw ParseError("more than 26 choices");
  for (size_t i = 0; i < choices->size(); ++i) {
    if (!(*choices)[i].is_string()) throw ParseError("choices must be strings");
    item.choices.push_back({letter_for(i), (*choices)[i].get<std::string>()});
  }
  auto answer = record.find("answer");
  if (answer == record.end() || answer->is_null()) {
    throw ParseError("missing required field 'answer'");
  }
  if (answer->is_number_integer()) {
    const auto index = answer->get<int64_t>();
    if (index < 0 || static_cast<size_t>(index) >= item.choices.size()) {
      throw ParseError("answer index out of range");
    }
    item.answer = letter_for(static_cast<size_t>(index));
  } else if (answer->is_string()) {
    std::string letter(trim(answer->get<std::string>()));
    if (letter.size() == 1) letter[0] = static_cast<char>(std::toupper(letter[0]));
    item.answer = letter;
  } else {
    throw ParseError("field 'answer' must be an index or a letter");
  }
  return item;
}

struct NliFlavor {
  std::string_view question;
  std::vector<std::string_view> choices;
  std::vector<std::string_view> labels;  // lowercase label per choice
};

const std::vector<NliFlavor>& nli_flavors() {
  static const std::vector<NliFlavor> flavors = {
      {kWiceQuestion,
       {"supported", "partially supported", "not supported"},
       {"supported", "partially_supported", "not_supported"}},
      {kFeverQuestion,
       {"supports", "refutes", "not enough info"},
       {"supports", "refutes", "not enough info"}},
  };
  return flavors;
}

QAItem parse_nli(const json& record) {
  QAItem item;
  item.task_kind = TaskKind::kMultipleChoice;
  const std::string evidence = required_string(record, "evidence");
  const std::string claim = required_string(record, "claim");
  std::string label = to_lower_ascii(trim(required_string(record, "label")));
  std::replace(label.begin(), label.end(), ' ', '_');
  for (const NliFlavor& flavor : nli_flavors()) {
    for (size_t i = 0; i < flavor.labels.size(); ++i) {
      std::string candidate(flavor.labels[i]);
      std::replace(candidate.begin(), candidate.end(), ' ', '_');
      if (candidate != label) continue;
      item.context = evidence;
      item.question = "Claim: " + claim + "\n" + std::string(flavor.question);
      for (size_t c = 0; c < flavor.choices.size(); ++c) {
        item.choices.push_back({letter_for(c), std::string(flavor.choices[c])});
      }
      item.answer = letter_for(i);
      item.domain = optional_string(record, "domain");
      return item;
    }
  }
  throw ParseError("unknown NLI label '" + label + "'");
}

void check_item(const QAItem& item) {
  if (item.task_kind == TaskKind::kMultipleChoice) {
    if (item.choices.empty()) throw ParseError("multiple-choice item without choices");
    if (item.answer) {
      const bool known = std::any_of(
          item.choices.begin(), item.choices.end(),
          [&](const Choice& c) { return c.letter == *item.answer; });
      if (!known) throw ParseError("answer '" + *item.answer + "' is not a choice letter");
    } else if (item.answerable) {
      throw ParseError("missing required field 'answer'");
    }
  } else if (item.answerable && !item.answer) {
    throw ParseError("missing required field 'answer'");
  }
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  return kind == TaskKind::kQa ? "qa" : "multiple_choice";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "qa") return TaskKind::kQa;
  if (text == "multiple_choice") return TaskKind::kMultipleChoice;
  throw ParseError("unknown task_kind '" + std::string(text) + "'");
}

std::string_view to_string(Schema schema) {
  switch (schema) {
    case Schema::kQaJsonl: return "qa_jsonl";
    case Schema::kMcJsonl: return "mc_jsonl";
    case Schema::kNliAsMc: return "nli_as_mc";
    case Schema::kCanonical: return "canonical";
  }
  return "unknown";
}

Schema parse_schema(std::string_view text) {
  if (text == "qa_jsonl") return Schema::kQaJsonl;
  if (text == "mc_jsonl") return Schema::kMcJsonl;
  if (text == "nli_as_mc") return Schema::kNliAsMc;
  if (text == "canonical") return Schema::kCanonical;
  throw ValidationError("unknown schema '" + std::string(text) + "'");
}

const QAItem* Dataset::find(std::string_view id) const {
  for (const QAItem& item : items) {
    if (item.id == id) return &item;
  }
  return nullptr;
}

nlohmann::ordered_json to_json(const QAItem& item) {
  nlohmann::ordered_json out;
  out["id"] = item.id;
  out["question"] = item.question;
  out["context"] = item.context ? json(*item.context) : json(nullptr);
  auto choices = nlohmann::ordered_json::array();
  for (const Choice& c : item.choices) choices.push_back({c.letter, c.text});
  out["choices"] = choices;
  out["answer"] = item.answer ? json(*item.answer) : json(nullptr);
  out["domain"] = item.domain ? json(*item.domain) : json(nullptr);
  out["task_kind"] = to_string(item.task_kind);
  out["answerable"] = item.answerable;
  return out;
}

QAItem item_from_json(const json& record) {
  if (!record.is_object()) throw ParseError("record is not a JSON object");
  QAItem item;
  auto id = record_id(record);
  if (!id) throw ParseError("missing required field 'id'");
  item.id = *id;
  item.question = required_string(record, "question");
  item.context = optional_string(record, "context");
  item.answer = optional_string(record, "answer");
  item.domain = optional_string(record, "domain");
  item.task_kind = parse_task_kind(required_string(record, "task_kind"));
  if (auto it = record.find("answerable"); it != record.end()) {
    if (!it->is_boolean()) throw ParseError("field 'answerable' must be boolean");
    item.answerable = it->get<bool>();
  }
  if (auto it = record.find("choices"); it != record.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError("field 'choices' must be an array");
    for (const json& pair : *it) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
          !pair[1].is_string()) {
        throw ParseError("choices must be [letter, text] pairs");
      }
      item.choices.push_back({pair[0].get<std::string>(), pair[1].get<std::string>()});
    }
  }
  check_item(item);
  return item;
}

Dataset parse_dataset_text(std::string_view text, Schema schema,
                           const ParseOptions& options) {
  Dataset dataset;
  dataset.name = options.name.value_or("dataset");
  dataset.provenance.schema = std::string(to_string(schema));
  std::unordered_set<std::string> seen;

  size_t line_no = 0;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (trim(line).empty()) continue;

    try {
      json record;
      try {
        record = json::parse(line);
      } catch (const json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
      }
      if (!record.is_object()) throw ParseError("record is not a JSON object");

      QAItem item;
      switch (schema) {
        case Schema::kQaJsonl: item = parse_qa(record); break;
        case Schema::kMcJsonl: item = parse_mc(record); break;
        case Schema::kNliAsMc: item = parse_nli(record); break;
        case Schema::kCanonical: item = item_from_json(record); break;
      }
      if (schema != Schema::kCanonical) {
        item.id = record_id(record).value_or(dataset.name + "-" +
                                             std::to_string(line_no));
        check_item(item);
      }
      if (!seen.insert(item.id).second) {
        throw ParseError("duplicate id '" + item.id + "'");
      }
      dataset.items.push_back(std::move(item));
    } catch (const ParseError& e) {
      if (options.strict) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
      }
      dataset.issues.push_back({line_no, e.what()});
    }
  }
  if (dataset.items.empty()) throw ParseError("zero valid records");
  return dataset;
}

Dataset parse_dataset(const std::filesystem::path& path, Schema schema,
                      const ParseOptions& options) {
  const std::string text = read_file(path);
  ParseOptions resolved = options;
  if (!resolved.name) resolved.name = path.stem().string();
  Dataset dataset;
  try {
    dataset = parse_dataset_text(text, schema, resolved);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  dataset.provenance.sources.push_back(path.string());
  return dataset;
}

std::string to_canonical_jsonl(const Dataset& dataset) {
  std::string out;
  for (const QAItem& item : dataset.items) {
    out += to_json(item).dump();
    out.push_back('\n');
  }
  return out;
}

void write_canonical_jsonl(const Dataset& dataset,
                           const std::filesystem::path& path) {
  write_file(path, to_canonical_jsonl(dataset));
}

Dataset sample_subset(const Dataset& dataset, size_t n, uint64_t seed) {
  if (n > dataset.items.size()) {
    throw ValidationError("cannot sample " + std::to_string(n) + " items from " +
                          std::to_string(dataset.items.size()));
  }
  const auto order = seeded_permutation(dataset.items.size(), seed, n);
  Dataset out;
  out.name = dataset.name;
  out.provenance = dataset.provenance;
  out.provenance.operations.push_back(
      "sample n=" + std::to_string(n) + " seed=" + std::to_string(seed) +
      " prng=" + std::string(Prng::kName));
  out.items.reserve(n);
  for (size_t i = 0; i < n; ++i) out.items.push_back(dataset.items[order[i]]);
  return out;
}

DomainSplit domain_split(const Dataset& dataset,
                         const std::vector<std::string>& id_domains,
                         double train_fraction, uint64_t seed) {
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) {
    throw ValidationError("train_fraction must lie in [0, 1]");
  }
  std::set<std::string> observed;
  for (const QAItem& item : dataset.items) {
    if (!item.domain) throw ValidationError("item '" + item.id + "' has no domain tag");
    observed.insert(*item.domain);
  }
  const std::set<std::string> wanted(id_domains.begin(), id_domains.end());
  for (const std::string& tag : wanted) {
    if (!observed.count(tag)) throw ValidationError("unknown domain tag '" + tag + "'");
  }

  std::vector<size_t> in_domain;
  for (size_t i = 0; i < dataset.items.size(); ++i) {
    if (wanted.count(*dataset.items[i].domain)) in_domain.push_back(i);
  }
  const auto n_train = static_cast<size_t>(
      std::floor(train_fraction * static_cast<double>(in_domain.size())));
  const auto order = seeded_permutation(in_domain.size(), seed);
  std::vector<bool> is_train(dataset.items.size(), false);
  for (size_t i = 0; i < n_train; ++i) is_train[in_domain[order[i]]] = true;

  DomainSplit split;
  const std::string op = "domain_split fraction=" + std::to_string(train_fraction) +
                         " seed=" + std::to_string(seed) +
                         " prng=" + std::string(Prng::kName);
  for (Dataset* part : {&split.train, &split.id_test, &split.ood_test}) {
    part->provenance = dataset.provenance;
    part->provenance.operations.push_back(op);
  }
  split.train.name = dataset.name + "-train";
  split.id_test.name = dataset.name + "-id-test";
  split.ood_test.name = dataset.name + "-ood-test";
  for (size_t i = 0; i < dataset.items.size(); ++i) {
    const QAItem& item = dataset.items[i];
    if (!wanted.count(*item.domain)) {
      split.ood_test.items.push_back(item);
    } else if (is_train[i]) {
      split.train.items.push_back(item);
    } else {
      split.id_test.items.push_back(item);
    }
  }
  return split;
}

Dataset dedupe_exact(const Dataset& dataset) {
  Dataset out;
  out.name = dataset.name;
  out.provenance = dataset.provenance;
  out.provenance.operations.push_back("dedupe_exact");
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  for (const QAItem& item : dataset.items) {
    auto key = std::make_tuple(item.question, item.context.value_or(""),
                               item.answer.value_or(""));
    if (seen.insert(std::move(key)).second) out.items.push_back(item);
  }
  return out;
}

void validate(const Dataset& dataset) {
  std::unordered_set<std::string> seen;
  for (const QAItem& item : dataset.items) {
    if (!seen.insert(item.id).second) {
      throw ValidationError("duplicate id '" + item.id + "'");
    }
    try {
      check_item(item);
    } catch (const ParseError& e) {
      throw ValidationError("item '" + item.id + "': " + e.what());
    }
  }
}

PromptTemplate load_template(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  PromptTemplate tmpl;
  tmpl.context_prefix = doc.value("context_prefix", tmpl.context_prefix);
  tmpl.question_prefix = doc.value("question_prefix", tmpl.question_prefix);
  tmpl.answer_prefix = doc.value("answer_prefix", tmpl.answer_prefix);
  return tmpl;
}

std::string render_question(const QAItem& item, const PromptTemplate& tmpl) {
  std::string out;
  if (item.context) out += tmpl.context_prefix + *item.context + "\n";
  out += tmpl.question_prefix + item.question;
  if (!item.choices.empty()) {
    out.push_back('\n');
    for (size_t i = 0; i < item.choices.size(); ++i) {
      if (i) out.push_back(' ');
      out += "(" + item.choices[i].letter + ") " + item.choices[i].text;
    }
  }
  return out;
}

std::string render_prompt(const QAItem& item, const PromptTemplate& tmpl) {
  return render_question(item, tmpl) + tmpl.answer_prefix;
}

}  // namespace refusal
