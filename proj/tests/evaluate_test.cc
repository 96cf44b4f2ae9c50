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

#include "refusal/evaluate.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "refusal/construct.h"
#include "refusal/error.h"
#include "refusal/prng.h"
#include "refusal/synthetic_model.h"
#include "test_util.h"

namespace refusal {
namespace {

using ::refusal::testing::answer_word;
using ::refusal::testing::dataset_from_table;
using ::refusal::testing::make_table;
using ::refusal::testing::scratch_dir;

RequestLimits quick() {
  RequestLimits l;
  l.max_concurrent = 4;
  l.max_attempts = 2;
  l.backoff_base = std::chrono::milliseconds(1);
  return l;
}

std::vector<EvalResult> ranked(const std::vector<int>& correct) {
  std::vector<EvalResult> out;
  for (size_t i = 0; i < correct.size(); ++i) {
    EvalResult r;
    r.id = "r" + std::to_string(100 + i);
    r.correct = correct[i] != 0;
    r.combined_conf = 1.0 - static_cast<double>(i) / static_cast<double>(correct.size() + 1);
    out.push_back(r);
  }
  return out;
}

// Direct evaluation of the precision/recall sum with every P(k), R(k)
// recounted from scratch.
double brute_force_ap(std::vector<EvalResult> results, bool shifted) {
  std::sort(results.begin(), results.end(), [](const EvalResult& a, const EvalResult& b) {
    if (a.combined_conf != b.combined_conf) return a.combined_conf > b.combined_conf;
    return a.id < b.id;
  });
  const size_t n = results.size();
  size_t total = 0;
  for (const auto& r : results) total += r.correct;
  if (total == 0) return 0.0;
  auto count_top = [&](size_t k) {
    size_t c = 0;
    for (size_t i = 0; i < k; ++i) c += results[i].correct;
    return static_cast<double>(c);
  };
  auto precision = [&](size_t k) { return k == 0 ? 1.0 : count_top(k) / static_cast<double>(k); };
  auto recall = [&](size_t k) { return count_top(k) / static_cast<double>(total); };
  double ap = 0.0;
  if (shifted) {
    for (size_t k = 0; k < n; ++k) ap += (recall(k + 1) - recall(k)) * precision(k);
  } else {
    for (size_t k = 1; k <= n; ++k) ap += (recall(k) - recall(k - 1)) * precision(k);
  }
  return ap;
}

TEST(ApScoreTest, Examples) {
  EXPECT_DOUBLE_EQ(ap_score(ranked({1, 1, 1})).ap, 1.0);
  const APCurve wrong = ap_score(ranked({0, 0, 0}));
  EXPECT_EQ(wrong.ap, 0.0);
  EXPECT_TRUE(wrong.degenerate);
  EXPECT_NEAR(ap_score(ranked({1, 0, 1})).ap, 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(ap_score(ranked({1, 0, 1}), APConvention::kShifted).ap, 0.5 + 0.5 * 0.5, 1e-15);
}

TEST(ApScoreTest, CurvePoints) {
  const APCurve c = ap_score(ranked({1, 0, 1}));
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points[1].k, 2u);
  EXPECT_DOUBLE_EQ(c.points[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(c.points[1].recall, 0.5);
  EXPECT_DOUBLE_EQ(c.points[2].recall, 1.0);
  EXPECT_EQ(ap_curve_csv(c), "k,precision,recall\n1,1.000000,0.500000\n2,0.500000,0.500000\n"
                             "3,0.666667,1.000000\n");
}

TEST(ApScoreTest, TiesBreakById) {
  std::vector<EvalResult> rs = ranked({0, 1});
  for (auto& r : rs) r.combined_conf = 0.5;
  EXPECT_DOUBLE_EQ(ap_score(rs).ap, 0.5);  // r100 (wrong) ranks first
  std::swap(rs[0], rs[1]);
  EXPECT_DOUBLE_EQ(ap_score(rs).ap, 0.5);
}

TEST(ApScoreTest, MatchesBruteForceExhaustivelyUpToTen) {
  for (size_t n = 1; n <= 10; ++n) {
    for (uint32_t mask = 0; mask < (1u << n); ++mask) {
      std::vector<int> correct(n);
      for (size_t i = 0; i < n; ++i) correct[i] = (mask >> i) & 1u;
      const auto rs = ranked(correct);
      ASSERT_NEAR(ap_score(rs).ap, brute_force_ap(rs, false), 1e-12);
      ASSERT_NEAR(ap_score(rs, APConvention::kShifted).ap, brute_force_ap(rs, true), 1e-12);
    }
  }
}

TEST(ApScoreTest, MatchesBruteForceWithTiedConfidences) {
  Prng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const size_t n = 1 + rng.uniform_below(30);
    std::vector<EvalResult> rs(n);
    for (size_t i = 0; i < n; ++i) {
      rs[i].id = "id" + std::to_string(rng.uniform_below(1000)) + "_" + std::to_string(i);
      rs[i].correct = rng.uniform_below(2) == 1;
      rs[i].combined_conf = static_cast<double>(rng.uniform_below(5)) / 4.0;
    }
    ASSERT_NEAR(ap_score(rs).ap, brute_force_ap(rs, false), 1e-12);
  }
}

TEST(ApScoreTest, SwappingWrongAboveCorrectNeverLowersAp) {
  Prng rng(23);
  for (int trial = 0; trial < 2000; ++trial) {
    const size_t n = 2 + rng.uniform_below(15);
    std::vector<int> correct(n);
    for (int& c : correct) c = static_cast<int>(rng.uniform_below(2));
    const size_t i = rng.uniform_below(n - 1);
    if (!(correct[i] == 0 && correct[i + 1] == 1)) continue;
    const double before = ap_score(ranked(correct)).ap;
    std::swap(correct[i], correct[i + 1]);
    ASSERT_GE(ap_score(ranked(correct)).ap, before - 1e-15);
  }
}

TEST(ApScoreTest, EmptyInputIsAnError) {
  EXPECT_THROW(ap_score({}), ValidationError);
}

TEST(CombinedConfidenceTest, Examples) {
  EXPECT_NEAR(combined_confidence(0.6, 0.8, 0.5), 0.7, 1e-15);
  EXPECT_EQ(combined_confidence(0.6, 0.8, 1.0), 0.6);
  EXPECT_EQ(combined_confidence(0.6, 0.8, 0.0), 0.8);
  for (double w : {0.0, 0.3, 1.0}) {
    EXPECT_LE(combined_confidence(0.2, 0.5, w), combined_confidence(0.3, 0.5, w));
    EXPECT_LE(combined_confidence(0.2, 0.5, w), combined_confidence(0.2, 0.6, w));
  }
}

TEST(AccuracyTest, WillinglyAnswered) {
  std::vector<EvalResult> rs(10);
  for (size_t i = 0; i < 10; ++i) {
    rs[i].refused = i >= 8;
    rs[i].correct = i < 6;
  }
  const AccuracyReport a = accuracy(rs);
  EXPECT_EQ(a.willing, 8u);
  EXPECT_EQ(a.correct, 6u);
  EXPECT_DOUBLE_EQ(*a.accuracy, 0.75);
  for (auto& r : rs) r.refused = true;
  const AccuracyReport none = accuracy(rs);
  EXPECT_FALSE(none.accuracy.has_value());
  EXPECT_TRUE(none.no_willing);
}

TEST(MajorityVoteTest, Examples) {
  std::vector<std::string> s(7, "Paris");
  s.insert(s.end(), 2, "Lyon");
  s.push_back("Rome");
  Vote v = majority_vote_confidence(s, 10);
  EXPECT_EQ(v.answer, "Paris");
  EXPECT_DOUBLE_EQ(v.confidence, 0.7);
  v = majority_vote_confidence(std::vector<std::string>(4, "x"), 4);
  EXPECT_DOUBLE_EQ(v.confidence, 1.0);
  std::vector<std::string> tie = {"b", "a", "a", "b", "a", "b", "b", "a", "a", "b"};
  v = majority_vote_confidence(tie, 10);
  EXPECT_EQ(v.answer, "b");
  EXPECT_DOUBLE_EQ(v.confidence, 0.5);
  EXPECT_THROW(majority_vote_confidence(tie, 9), ValidationError);
}

TEST(IsRefusalTest, Examples) {
  EXPECT_TRUE(is_refusal("It is impossible to know."));
  EXPECT_FALSE(is_refusal("Paris"));
  EXPECT_TRUE(is_refusal("I\xE2\x80\x99m not sure"));
  EXPECT_TRUE(is_refusal("I'M NOT SURE."));
  EXPECT_TRUE(is_refusal("Honestly, we DO NOT KNOW"));
  for (std::string_view e : kUncertaintyExpressions) EXPECT_TRUE(is_refusal(e)) << e;
  EXPECT_FALSE(is_refusal("Paris", {}));
}

TEST(AnswerPassTest, QaConfidenceIsGeometricMean) {
  auto table = make_table(3, [](size_t i) { return std::vector{0.5, 1.0, 0.2}[i]; });
  table.facts[2].answer = "two tokens";
  table.facts[2].familiarity = 0.8;
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  const Dataset d = dataset_from_table(table);
  AnswerPass p = answer_pass(m, d.items[0]);
  EXPECT_EQ(p.prediction, answer_word(0));
  EXPECT_NEAR(p.pred_conf, 0.5, 1e-12);
  p = answer_pass(m, d.items[1]);
  EXPECT_NEAR(p.pred_conf, 1.0, 1e-12);
  p = answer_pass(m, d.items[2]);
  EXPECT_EQ(p.prediction, "two tokens");
  EXPECT_NEAR(p.pred_conf, std::sqrt(0.8), 1e-12);
}

TEST(AnswerPassTest, MultipleChoiceUsesNormalizedLetterScores) {
  KnowledgeTable table;
  table.facts.push_back({"m1", "Which?", "A", 0.7, {"B", "C", "D"}});
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  QAItem item;
  item.id = "m1";
  item.question = "Which?";
  item.task_kind = TaskKind::kMultipleChoice;
  item.choices = {{"A", "w"}, {"B", "x"}, {"C", "y"}, {"D", "z"}};
  item.answer = "A";
  const AnswerPass p = answer_pass(m, item);
  EXPECT_EQ(p.prediction, "A");
  EXPECT_NEAR(p.pred_conf, 0.7, 1e-12);
}

TEST(AnswerPassTest, TextOnlyBackendIsACapabilityError) {
  const auto table = make_table(1, [](size_t) { return 1.0; });
  auto backend = std::make_shared<SyntheticBackend>(SyntheticModel(table));
  backend->set_text_only(true);
  EXPECT_THROW(answer_pass(make_synthetic_model(backend, quick()), dataset_from_table(table).items[0]),
               CapabilityError);
}

TEST(CertaintyProbeTest, EqualsFamiliarity) {
  const auto table = make_table(5, [](size_t i) { return std::vector{1.0, 0.8, 0.5, 0.2, 0.0}[i]; });
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  const Dataset d = dataset_from_table(table);
  for (size_t i = 0; i < 5; ++i) {
    EXPECT_NEAR(certainty_probe(m, d.items[i], "whatever."), table.facts[i].familiarity, 1e-12);
  }
}

TEST(EvaluateDatasetTest, RTuningSummary) {
  const auto table = make_table(10, [](size_t i) { return i < 6 ? 1.0 : 0.0; });
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  const EvalRun run = evaluate_dataset(m, dataset_from_table(table), EvalMode::kRTuning);
  ASSERT_EQ(run.results.size(), 10u);
  for (const EvalResult& r : run.results) {
    EXPECT_GE(r.combined_conf, 0.0);
    EXPECT_LE(r.combined_conf, 1.0);
  }
  EXPECT_DOUBLE_EQ(run.summary["accuracy_lexicon"].get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(run.summary["answer_rate_certainty"].get<double>(), 0.6);
  EXPECT_DOUBLE_EQ(run.summary["accuracy_certainty"].get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(run.summary["ap"].get<double>(), 1.0);
  EXPECT_EQ(run.summary["w"], 0.5);
}

TEST(EvaluateDatasetTest, VanillaConfidenceIsPredictionConfidence) {
  const auto table = make_table(4, [](size_t i) { return 0.4 + 0.2 * static_cast<double>(i); });
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  const EvalRun run = evaluate_dataset(m, dataset_from_table(table), EvalMode::kVanilla);
  for (size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(run.results[i].combined_conf, table.facts[i].familiarity, 1e-12);
  }
}

TEST(EvaluateDatasetTest, VanillaCUsesVoteShare) {
  const auto table = make_table(2, [](size_t i) { return i == 0 ? 1.0 : 0.0; });
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  EvalConfig cfg;
  cfg.k_votes = 10;
  const EvalRun run = evaluate_dataset(m, dataset_from_table(table), EvalMode::kVanillaC, cfg);
  EXPECT_DOUBLE_EQ(run.results[0].combined_conf, 1.0);
  EXPECT_TRUE(run.results[0].correct);
  EXPECT_LT(run.results[1].combined_conf, 1.0);
  EXPECT_FALSE(run.results[1].correct);
}

TEST(RefusalRateTest, ConstructedModels) {
  const auto table = make_table(8, [](size_t) { return 0.0; });
  Dataset d = dataset_from_table(table);
  for (QAItem& item : d.items) {
    item.answerable = false;
    item.answer.reset();
  }
  SyntheticOptions always;
  always.refusal_policy = RefusalPolicy::kAlways;
  always.refusal_text = "We do not know.";
  EXPECT_DOUBLE_EQ(refusal_rate(make_synthetic_model(table, always, quick()), d).rate, 1.0);
  EXPECT_DOUBLE_EQ(refusal_rate(make_synthetic_model(table, {}, quick()), d).rate, 0.0);
}

TEST(EvalResultTest, JsonRoundTrip) {
  const auto table = make_table(6, [](size_t i) { return i % 2 ? 0.3 : 0.9; });
  const EvalRun run = evaluate_dataset(make_synthetic_model(table, {}, quick()),
                                       dataset_from_table(table), EvalMode::kRTuning);
  const auto dir = scratch_dir("eval");
  {
    std::ofstream out(dir / "r.jsonl", std::ios::binary);
    out << to_jsonl(run.results);
  }
  const auto back = load_eval_results(dir / "r.jsonl");
  ASSERT_EQ(back.size(), run.results.size());
  EXPECT_EQ(to_jsonl(back), to_jsonl(run.results));
}

}  // namespace
}  // namespace refusal
