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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "refusal/error.h"
#include "refusal/prng.h"
#include "refusal/synthetic_model.h"
#include "test_util.h"

namespace refusal {
namespace {

using ::refusal::testing::dataset_from_table;
using ::refusal::testing::make_table;

RequestLimits quick() {
  RequestLimits l;
  l.max_concurrent = 4;
  l.max_attempts = 2;
  l.backoff_base = std::chrono::milliseconds(1);
  return l;
}

Partition split_by(const KnowledgeTable& t, double threshold) {
  Partition p;
  for (const Fact& f : t.facts) (f.familiarity >= threshold ? p.certain : p.uncertain).push_back(f.id);
  return p;
}

TEST(PerplexityTest, Fixtures) {
  const std::vector<double> quarter(3, std::log(0.25));
  EXPECT_NEAR(perplexity(quarter), 4.0, 1e-9);
  const std::vector<double> zeros(5, 0.0);
  EXPECT_NEAR(perplexity(zeros), 1.0, 1e-9);
  const std::vector<double> mixed = {std::log(0.5), std::log(0.125)};
  EXPECT_NEAR(perplexity(mixed), 4.0, 1e-9);
}

TEST(PerplexityTest, Errors) {
  EXPECT_THROW(perplexity(std::vector<double>{}), ValidationError);
  EXPECT_THROW(perplexity(std::vector<double>{-0.1, 0.2}), ValidationError);
}

TEST(PerplexityTest, MatchesDefinitionOnRandomInputs) {
  Prng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> lps(1 + rng.uniform_below(50));
    double product = 1.0;
    for (double& lp : lps) {
      const double p = 0.01 + 0.99 * rng.uniform01();
      lp = std::log(p);
      product *= p;
    }
    const double expected = std::pow(product, -1.0 / static_cast<double>(lps.size()));
    ASSERT_NEAR(perplexity(lps), expected, 1e-9 * expected);
    ASSERT_GE(perplexity(lps), 1.0);
  }
}

TEST(DatasetPerplexityTest, FamiliarQuestionsScoreLower) {
  const auto table = make_table(20, [](size_t i) { return i % 2 == 0 ? 1.0 : 0.0; });
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  const PerplexityReport r =
      dataset_perplexity(m, dataset_from_table(table), split_by(table, 0.5));
  ASSERT_EQ(r.per_item.size(), 20u);
  EXPECT_NEAR(*r.group_means.certain, 1.0 / 0.9, 1e-9);
  EXPECT_NEAR(*r.group_means.uncertain, 10.0, 1e-9);
  EXPECT_EQ(r.model_name, "synthetic");
}

TEST(DatasetPerplexityTest, DuplicatingItemsKeepsGroupMeans) {
  const auto table = make_table(12, [](size_t i) { return static_cast<double>(i % 4) / 3.0; });
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  const Partition p = split_by(table, 0.5);
  const PerplexityReport once = dataset_perplexity(m, dataset_from_table(table), p);
  std::map<std::string, double> doubled = once.per_item;
  Partition p2 = p;
  for (const auto& [id, v] : once.per_item) doubled[id + "_copy"] = v;
  for (const auto& id : p.certain) p2.certain.push_back(id + "_copy");
  for (const auto& id : p.uncertain) p2.uncertain.push_back(id + "_copy");
  const GroupMeans g = group_means(doubled, p2);
  EXPECT_NEAR(*g.certain, *once.group_means.certain, 1e-12);
  EXPECT_NEAR(*g.uncertain, *once.group_means.uncertain, 1e-12);
}

TEST(DatasetPerplexityTest, TextOnlyBackendIsACapabilityError) {
  const auto table = make_table(3, [](size_t) { return 1.0; });
  auto backend = std::make_shared<SyntheticBackend>(SyntheticModel(table));
  backend->set_text_only(true);
  EXPECT_THROW(dataset_perplexity(make_synthetic_model(backend, quick()), dataset_from_table(table),
                                  split_by(table, 0.5)),
               CapabilityError);
}

TEST(EntropyReportTest, UnfamiliarItemsAreMoreScattered) {
  const auto table = make_table(200, [](size_t i) { return i % 2 == 0 ? 1.0 : 0.5; });
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  const EntropyReport r = entropy_report(m, dataset_from_table(table), split_by(table, 0.75));
  EXPECT_EQ(r.k, 5);
  EXPECT_EQ(*r.group_means.certain, 0.0);
  EXPECT_GT(*r.group_means.uncertain, *r.group_means.certain);
  EXPECT_LE(*r.group_means.uncertain, std::log(5.0));
}

TEST(EntropyReportTest, Validation) {
  const auto table = make_table(3, [](size_t) { return 1.0; });
  const ModelHandle m = make_synthetic_model(table, {}, quick());
  EntropyOptions o;
  o.k = 1;
  EXPECT_THROW(entropy_report(m, dataset_from_table(table), split_by(table, 0.5), o),
               ValidationError);
}

TEST(HistogramTest, Examples) {
  auto h = confidence_histogram({{"a", 0.05}, {"b", 0.95}}, 2);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h[0].count, 1u);
  EXPECT_EQ(h[1].count, 1u);
  h = confidence_histogram({}, 4);
  for (const auto& b : h) EXPECT_EQ(b.count, 0u);
  h = confidence_histogram({{"edge", 1.0}, {"zero", 0.0}, {"mid", 0.5}}, 2);
  EXPECT_EQ(h[0].count, 1u);
  EXPECT_EQ(h[1].count, 2u);
  EXPECT_EQ(histogram_csv(h), "lower,upper,count\n0,0.5,1\n0.5,1,2\n");
}

TEST(HistogramTest, OutOfRangeNamesTheId) {
  try {
    confidence_histogram({{"ok", 0.2}, {"bad-7", 1.5}}, 10);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("bad-7"), std::string::npos);
  }
  EXPECT_THROW(confidence_histogram({}, 0), ValidationError);
}

TEST(HistogramTest, UniformValuesFillBinsEvenly) {
  Prng rng(1000);
  std::vector<std::pair<std::string, double>> values;
  for (int i = 0; i < 1000; ++i) values.emplace_back(std::to_string(i), rng.uniform01());
  size_t total = 0;
  for (const auto& b : confidence_histogram(values, 10)) {
    EXPECT_GE(b.count, 60u);
    EXPECT_LE(b.count, 140u);
    total += b.count;
  }
  EXPECT_EQ(total, 1000u);
}

TEST(PerItemCsvTest, Layout) {
  Partition p;
  p.certain = {"a"};
  p.uncertain = {"b,c"};
  EXPECT_EQ(per_item_csv({{"a", 1.5}, {"b,c", 2.0}}, p, "perplexity"),
            "id,bucket,perplexity\na,certain,1.5\n\"b,c\",uncertain,2\n");
}

}  // namespace
}  // namespace refusal
