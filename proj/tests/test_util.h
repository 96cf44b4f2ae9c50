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

#ifndef REFUSAL_TESTS_TEST_UTIL_H_
#define REFUSAL_TESTS_TEST_UTIL_H_

#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>
#include <vector>

#include "refusal/corpus.h"
#include "refusal/identify.h"
#include "refusal/synthetic_model.h"

namespace refusal::testing {

inline std::filesystem::path data_path(const std::string& name) {
  return std::filesystem::path(REFUSAL_TEST_DATA) / name;
}

// Fresh directory under the system temp dir, unique per process and call.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("refusal_" + tag + "_" + std::to_string(::getpid()) + "_" +
              std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Single-token pseudo-words that never contain one another.
inline std::string answer_word(size_t i) { return "ans" + std::to_string(i) + "x"; }
inline std::string distractor_word(size_t i, size_t j) {
  return "dis" + std::to_string(i) + "y" + std::to_string(j) + "z";
}

inline KnowledgeTable make_table(size_t n, const std::function<double(size_t)>& familiarity,
                                 size_t distractors = 3, uint64_t seed = 11) {
  KnowledgeTable t;
  t.seed = seed;
  for (size_t i = 0; i < n; ++i) {
    Fact f;
    f.id = "q" + std::to_string(i);
    f.question = "Which token is bound to slot " + std::to_string(i) + "?";
    f.answer = answer_word(i);
    f.familiarity = familiarity(i);
    for (size_t j = 0; j < distractors; ++j) f.distractors.push_back(distractor_word(i, j));
    t.facts.push_back(std::move(f));
  }
  return t;
}

inline Dataset dataset_from_table(const KnowledgeTable& t, const std::string& name = "fixture") {
  Dataset d;
  d.name = name;
  for (const Fact& f : t.facts) {
    QAItem item;
    item.id = f.id;
    item.question = f.question;
    item.answer = f.answer;
    d.items.push_back(std::move(item));
  }
  return d;
}

}  // namespace refusal::testing

#endif  // REFUSAL_TESTS_TEST_UTIL_H_
