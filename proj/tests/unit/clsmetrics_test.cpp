// Copyright 2026 The medcap Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "medcap/clsmetrics.hpp"
#include "medcap/errors.hpp"
#include "test_support.hpp"

namespace medcap::clsmetrics {
namespace {

std::vector<std::string> vocab(int k) {
  std::vector<std::string> v;
  for (int i = 0; i < k; ++i) v.push_back("c" + std::to_string(i));
  return v;
}

std::vector<LabelPair> to_pairs(const std::vector<int>& truth, const std::vector<int>& pred) {
  std::vector<LabelPair> pairs;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    LabelPair p{"c" + std::to_string(truth[i]), std::nullopt};
    if (pred[i] >= 0) p.prediction = "c" + std::to_string(pred[i]);
    pairs.push_back(p);
  }
  return pairs;
}

TEST(Metrics, AgreeWithOracleOnRandomInputs) {
  std::mt19937 rng(2026);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng() % 14);
    const int n = 1 + static_cast<int>(rng() % 120);
    std::vector<int> truth(n), pred(n);
    for (int i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % k);
      const auto roll = rng() % 10;
      pred[i] = roll == 0 ? -1 : roll < 5 ? truth[i] : static_cast<int>(rng() % k);
    }
    const auto report = compute_metrics(build_confusion(to_pairs(truth, pred), vocab(k)));
    const auto oracle = testing::oracle_metrics(truth, pred, k);
    EXPECT_EQ(report.n, static_cast<std::size_t>(n));
    EXPECT_NEAR(report.accuracy, oracle.accuracy, 1e-12);
    EXPECT_NEAR(report.balanced_accuracy, oracle.balanced_accuracy, 1e-12);
    EXPECT_NEAR(report.macro_precision, oracle.macro_precision, 1e-12);
    EXPECT_NEAR(report.macro_recall, oracle.macro_recall, 1e-12);
    EXPECT_NEAR(report.macro_f1, oracle.macro_f1, 1e-12) << "trial " << trial;
    EXPECT_EQ(report.unparseable,
              static_cast<std::size_t>(std::count(pred.begin(), pred.end(), -1)));
  }
}

TEST(Metrics, InvariantUnderClassRelabeling) {
  std::mt19937 rng(5);
  const int k = 6;
  std::vector<int> truth(80), pred(80);
  for (int i = 0; i < 80; ++i) {
    truth[i] = static_cast<int>(rng() % k);
    pred[i] = rng() % 3 == 0 ? static_cast<int>(rng() % k) : truth[i];
  }
  const auto base = compute_metrics(build_confusion(to_pairs(truth, pred), vocab(k)));
  std::vector<int> perm(k);
  std::iota(perm.begin(), perm.end(), 0);
  for (int round = 0; round < 10; ++round) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> t2(80), p2(80);
    for (int i = 0; i < 80; ++i) {
      t2[i] = perm[truth[i]];
      p2[i] = perm[pred[i]];
    }
    const auto r = compute_metrics(build_confusion(to_pairs(t2, p2), vocab(k)));
    EXPECT_NEAR(r.macro_f1, base.macro_f1, 1e-12);
    EXPECT_NEAR(r.macro_precision, base.macro_precision, 1e-12);
    EXPECT_NEAR(r.accuracy, base.accuracy, 1e-12);
  }
}

TEST(Metrics, HandWorkedExample) {
  // truth a a a b b c; pred a a b b (none) a
  const std::vector<std::string> v{"a", "b", "c"};
  const auto m = build_confusion({{"a", "a"},
                                  {"a", "a"},
                                  {"a", "b"},
                                  {"b", "b"},
                                  {"b", std::nullopt},
                                  {"c", "a"}},
                                 v);
  EXPECT_EQ(m.counts[0][0], 2u);
  EXPECT_EQ(m.counts[2][0], 1u);
  EXPECT_EQ(m.unparseable_by_class[1], 1u);
  EXPECT_EQ(m.matrix_total(), 5u);
  EXPECT_EQ(m.support(1), 2u);
  const auto r = compute_metrics(m);
  EXPECT_DOUBLE_EQ(r.accuracy, 3.0 / 6.0);
  EXPECT_DOUBLE_EQ(r.per_class.at("a").precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class.at("a").recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.per_class.at("b").precision, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class.at("b").recall, 0.5);
  EXPECT_DOUBLE_EQ(r.per_class.at("c").f1, 0.0);
  EXPECT_DOUBLE_EQ(r.macro_recall, (2.0 / 3.0 + 0.5 + 0.0) / 3.0);
  EXPECT_DOUBLE_EQ(r.macro_f1, (2.0 / 3.0 + 0.5) / 3.0);
}

TEST(Metrics, EdgeCases) {
  const auto v = vocab(3);
  EXPECT_THROW(compute_metrics(ConfusionMatrix::zeros(v)), EmptyInput);
  EXPECT_THROW(build_confusion({{"zz", "c0"}}, v), InputError);
  // Out-of-vocabulary predictions count as unparseable.
  const auto oov = compute_metrics(build_confusion({{"c0", "zz"}, {"c1", "c1"}}, v));
  EXPECT_EQ(oov.unparseable, 1u);
  EXPECT_DOUBLE_EQ(oov.accuracy, 0.5);
  // All unparseable: everything is zero, nothing divides by zero.
  const auto none = compute_metrics(build_confusion({{"c0", std::nullopt}}, v));
  EXPECT_EQ(none.accuracy, 0.0);
  EXPECT_EQ(none.macro_f1, 0.0);
  // Perfect predictions.
  const auto perfect = compute_metrics(build_confusion({{"c0", "c0"}, {"c2", "c2"}}, v));
  EXPECT_EQ(perfect.macro_f1, 1.0);
  EXPECT_EQ(perfect.balanced_accuracy, 1.0);
}

TEST(Metrics, ReportJsonRoundTrip) {
  auto r = compute_metrics(build_confusion({{"c0", "c0"}, {"c1", "c0"}}, vocab(2)));
  r.dataset = "fundus";
  r.model = "Base";
  const auto back = classification_report_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_EQ(back.model, "Base");
  EXPECT_THROW(classification_report_from_json(nlohmann::json::object()), InputError);
}

}  // namespace
}  // namespace medcap::clsmetrics
