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

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "refusal/digest.h"
#include "refusal/error.h"
#include "refusal/gateway.h"
#include "test_util.h"

namespace refusal {
namespace {

using ::refusal::testing::answer_word;
using ::refusal::testing::data_path;
using ::refusal::testing::distractor_word;
using ::refusal::testing::make_table;
using ::refusal::testing::scratch_dir;

std::string answer_prompt(const KnowledgeTable& t, size_t i) {
  return "Question: " + t.facts[i].question + "\nAnswer: ";
}

CompletionRequest greedy(std::string prompt) {
  CompletionRequest r;
  r.prompt = std::move(prompt);
  r.logprobs = true;
  return r;
}

TEST(TokenizeTest, TokensConcatenateToText) {
  for (std::string text : {"", "a", " a", "Question: x?\nAnswer: ", "  two  spaces  ", "ü日本 x"}) {
    std::string joined;
    for (const std::string& t : synthetic_tokenize(text)) joined += t;
    EXPECT_EQ(joined, text);
  }
  EXPECT_EQ(synthetic_tokenize("a bc  d").size(), 3u);
  EXPECT_EQ(synthetic_tokenize("a bc  d")[2], "  d");
}

TEST(ExtractQuestionTest, FindsLastQuestionSegment) {
  EXPECT_EQ(extract_question("Question: Who?\nAnswer: "), "Who?");
  EXPECT_EQ(extract_question("Context: c\nQuestion: Who?\n(A) x (B) y\nAnswer: "), "Who?");
  EXPECT_EQ(extract_question("Question: old\nAnswer: a\n\nQuestion: new\nAnswer:"), "new");
  EXPECT_EQ(extract_question("Question: bare"), "bare");
  EXPECT_EQ(extract_question("no marker"), "");
}

TEST(SyntheticModelTest, GreedyFollowsFamiliarity) {
  // With three distractors gold wins greedily iff f >= (1 - f) / 3.
  const auto table = make_table(5, [](size_t i) { return std::vector{1.0, 0.5, 0.25, 0.2, 0.0}[i]; });
  const SyntheticModel m(table);
  const std::vector<std::string> expected = {answer_word(0), answer_word(1), answer_word(2),
                                             distractor_word(3, 0), distractor_word(4, 0)};
  for (size_t i = 0; i < 5; ++i) {
    const auto out = m.synthesize(greedy(answer_prompt(table, i)));
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].text, expected[i]) << i;
  }
}

TEST(SyntheticModelTest, GreedyLogprobIsLogOfOutcomeProbability) {
  const auto table = make_table(2, [](size_t i) { return i == 0 ? 0.7 : 0.0; });
  const SyntheticModel m(table);
  auto out = m.synthesize(greedy(answer_prompt(table, 0)));
  ASSERT_EQ(out[0].tokens.size(), 1u);
  EXPECT_NEAR(*out[0].tokens[0].logprob, std::log(0.7), 1e-12);
  out = m.synthesize(greedy(answer_prompt(table, 1)));
  EXPECT_NEAR(*out[0].tokens[0].logprob, std::log(1.0 / 3.0), 1e-12);
}

TEST(SyntheticModelTest, SampledGoldFrequencyTracksFamiliarity) {
  const auto table = make_table(4, [](size_t i) { return 0.1 + 0.25 * static_cast<double>(i); });
  const SyntheticModel m(table);
  for (size_t i = 0; i < 4; ++i) {
    CompletionRequest r;
    r.prompt = answer_prompt(table, i);
    r.temperature = 0.7;
    r.n_samples = 4000;
    int gold = 0;
    for (const Completion& c : m.synthesize(r)) gold += c.text == table.facts[i].answer;
    const double f = table.facts[i].familiarity;
    const double sigma = std::sqrt(f * (1 - f) / 4000.0);
    EXPECT_NEAR(gold / 4000.0, f, 4 * sigma) << i;
  }
}

TEST(SyntheticModelTest, SamplingIsDeterministic) {
  const auto table = make_table(3, [](size_t) { return 0.5; });
  const SyntheticModel a(table);
  const SyntheticModel b(table);
  CompletionRequest r;
  r.prompt = answer_prompt(table, 1);
  r.temperature = 0.7;
  r.n_samples = 50;
  const auto x = a.synthesize(r);
  const auto y = b.synthesize(r);
  for (size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].text, y[i].text);
}

TEST(SyntheticModelTest, ProbeScoresSureAsFamiliarity) {
  const auto table = make_table(3, [](size_t i) { return std::vector{1.0, 0.3, 0.0}[i]; });
  const SyntheticModel m(table);
  for (size_t i = 0; i < 3; ++i) {
    const std::string prefix =
        answer_prompt(table, i) + "x. " + std::string(kCertaintyProbe);
    const double f = table.facts[i].familiarity;
    EXPECT_NEAR(m.token_logprob(prefix, " sure"), std::log(std::max(f, SyntheticModel::kFloor)),
                1e-12);
    EXPECT_NEAR(m.token_logprob(prefix, " unsure"),
                std::log(std::max(1 - f, SyntheticModel::kFloor)), 1e-12);
  }
  EXPECT_NEAR(m.token_logprob("Question: unknown?\nAnswer: x. " + std::string(kCertaintyProbe),
                              " unsure"),
              0.0, 1e-12);
}

TEST(SyntheticModelTest, EchoScoresPromptTokens) {
  const auto table = make_table(2, [](size_t i) { return i == 0 ? 1.0 : 0.0; });
  const SyntheticModel m(table);
  for (size_t i = 0; i < 2; ++i) {
    CompletionRequest r = greedy("Question: " + table.facts[i].question);
    r.echo = true;
    r.max_tokens = 0;
    const auto out = m.synthesize(r);
    ASSERT_EQ(out[0].text, r.prompt);
    ASSERT_GE(out[0].tokens.size(), 2u);
    EXPECT_FALSE(out[0].tokens[0].logprob.has_value());
    const double expected = std::log(0.1 + 0.8 * table.facts[i].familiarity);
    for (size_t k = 1; k < out[0].tokens.size(); ++k) {
      EXPECT_NEAR(*out[0].tokens[k].logprob, expected, 1e-12);
    }
  }
}

TEST(SyntheticModelTest, UnknownQuestionsHallucinateFromAPool) {
  const SyntheticModel m(make_table(1, [](size_t) { return 1.0; }));
  CompletionRequest r;
  r.prompt = "Question: Something never seen?\nAnswer: ";
  r.temperature = 1.0;
  r.n_samples = 200;
  std::map<std::string, int> seen;
  for (const Completion& c : m.synthesize(r)) ++seen[c.text];
  EXPECT_GE(seen.size(), 2u);
  EXPECT_LE(seen.size(), 4u);
}

TEST(SyntheticModelTest, RefusalPolicies) {
  const auto table = make_table(2, [](size_t i) { return i == 0 ? 1.0 : 0.0; });
  SyntheticOptions unfamiliar;
  unfamiliar.refusal_policy = RefusalPolicy::kRefuseUnfamiliar;
  const SyntheticModel a(table, unfamiliar);
  EXPECT_EQ(a.synthesize(greedy(answer_prompt(table, 0)))[0].text, answer_word(0));
  EXPECT_EQ(a.synthesize(greedy(answer_prompt(table, 1)))[0].text, "I don’t know.");
  EXPECT_EQ(a.synthesize(greedy("Question: unseen?\nAnswer: "))[0].text, "I don’t know.");

  SyntheticOptions always;
  always.refusal_policy = RefusalPolicy::kAlways;
  always.refusal_text = "No idea.";
  const SyntheticModel b(table, always);
  EXPECT_EQ(b.synthesize(greedy(answer_prompt(table, 0)))[0].text, "No idea.");
}

TEST(SyntheticModelTest, HonoursMaxTokensAndStop) {
  auto table = make_table(1, [](size_t) { return 1.0; });
  table.facts[0].answer = "three word answer";
  const SyntheticModel m(table);
  CompletionRequest r = greedy(answer_prompt(table, 0));
  r.max_tokens = 2;
  auto out = m.synthesize(r);
  EXPECT_EQ(out[0].text, "three word");
  EXPECT_TRUE(out[0].truncated);
  r.max_tokens = 32;
  r.stop = {" answer"};
  EXPECT_EQ(m.synthesize(r)[0].text, "three word");
}

TEST(SyntheticModelTest, RejectsInvalidRequests) {
  const SyntheticModel m(make_table(1, [](size_t) { return 1.0; }));
  CompletionRequest r;
  r.prompt = "x";
  r.n_samples = 3;  // greedy with several samples
  EXPECT_THROW(m.synthesize(r), ValidationError);
  r.n_samples = 1;
  r.temperature = -1;
  EXPECT_THROW(m.synthesize(r), ValidationError);
}

TEST(KnowledgeTableTest, LoadsAndRoundTrips) {
  const KnowledgeTable t = load_knowledge_table(data_path("knowledge.jsonl"), 3);
  EXPECT_EQ(t.facts.size(), 240u);
  EXPECT_EQ(t.seed, 3u);
  const auto dir = scratch_dir("knowledge");
  write_file(dir / "k.jsonl", to_jsonl(t));
  const KnowledgeTable back = load_knowledge_table(dir / "k.jsonl", 3);
  ASSERT_EQ(back.facts.size(), t.facts.size());
  EXPECT_EQ(back.facts[7].distractors, t.facts[7].distractors);
  EXPECT_EQ(to_jsonl(back), to_jsonl(t));
}

TEST(KnowledgeTableTest, Validation) {
  auto t = make_table(2, [](size_t) { return 0.5; });
  EXPECT_NO_THROW(t.validate());
  t.facts[1].familiarity = 1.5;
  EXPECT_THROW(t.validate(), ValidationError);
  t = make_table(2, [](size_t) { return 0.5; });
  t.facts[1].question = t.facts[0].question;
  EXPECT_THROW(t.validate(), ValidationError);
  t = make_table(2, [](size_t) { return 0.5; }, 0);
  EXPECT_THROW(t.validate(), ValidationError);
}

TEST(SyntheticBackendTest, FaultHooks) {
  auto backend = std::make_shared<SyntheticBackend>(SyntheticModel(make_table(1, [](size_t) {
    return 1.0;
  })));
  CompletionRequest r = greedy("Question: x\nAnswer: ");
  backend->fail_next(1);
  EXPECT_THROW(backend->complete(r), TransportError);
  EXPECT_NO_THROW(backend->complete(r));
  backend->set_fault_marker("POISON");
  r.prompt += "POISON";
  EXPECT_THROW(backend->complete(r), TransportError);
  backend->set_fault_marker("");
  backend->set_text_only(true);
  EXPECT_THROW(backend->complete(r), CapabilityError);
  r.logprobs = false;
  EXPECT_NO_THROW(backend->complete(r));
  EXPECT_EQ(backend->calls(), 5);
}

}  // namespace
}  // namespace refusal
