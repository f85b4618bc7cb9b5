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

#include "medcap/clsmetrics.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>
#include <numeric>

#include "medcap/errors.hpp"

namespace medcap::clsmetrics {

ConfusionMatrix ConfusionMatrix::zeros(std::vector<std::string> vocabulary) {
  ConfusionMatrix m;
  const auto k = vocabulary.size();
  m.vocabulary = std::move(vocabulary);
  m.counts.assign(k, std::vector<std::size_t>(k, 0));
  m.unparseable_by_class.assign(k, 0);
  return m;
}

std::size_t ConfusionMatrix::unparseable_count() const {
  return std::accumulate(unparseable_by_class.begin(), unparseable_by_class.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::matrix_total() const {
  std::size_t total = 0;
  for (const auto& row : counts) total = std::accumulate(row.begin(), row.end(), total);
  return total;
}

std::size_t ConfusionMatrix::support(std::size_t t) const {
  return std::accumulate(counts[t].begin(), counts[t].end(), unparseable_by_class[t]);
}

ConfusionMatrix build_confusion(const std::vector<LabelPair>& pairs,
                                const std::vector<std::string>& vocabulary) {
  auto m = ConfusionMatrix::zeros(vocabulary);
  auto index_of = [&](const std::string& label) -> std::optional<std::size_t> {
    auto it = std::find(vocabulary.begin(), vocabulary.end(), label);
    if (it == vocabulary.end()) return std::nullopt;
    return static_cast<std::size_t>(it - vocabulary.begin());
  };
  for (const auto& pair : pairs) {
    const auto t = index_of(pair.truth);
    if (!t) throw InputError("truth label '" + pair.truth + "' is not in the vocabulary");
    const auto p = pair.prediction ? index_of(*pair.prediction) : std::nullopt;
    if (p) {
      ++m.counts[*t][*p];
    } else {
      ++m.unparseable_by_class[*t];
    }
  }
  return m;
}

ClassificationReport compute_metrics(const ConfusionMatrix& matrix) {
  const auto k = matrix.vocabulary.size();
  ClassificationReport report;
  report.unparseable = matrix.unparseable_count();
  report.n = matrix.matrix_total() + report.unparseable;
  if (report.n == 0) throw EmptyInput("confusion matrix has no samples");

  std::size_t correct = 0;
  std::vector<std::size_t> predicted(k, 0);
  for (std::size_t t = 0; t < k; ++t) {
    correct += matrix.counts[t][t];
    for (std::size_t p = 0; p < k; ++p) predicted[p] += matrix.counts[t][p];
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n);

  double sum_p = 0.0, sum_r = 0.0, sum_f = 0.0;
  std::size_t supported = 0;
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetrics cm;
    cm.support = matrix.support(c);
    const auto tp = static_cast<double>(matrix.counts[c][c]);
    cm.precision = predicted[c] > 0 ? tp / static_cast<double>(predicted[c]) : 0.0;
    cm.recall = cm.support > 0 ? tp / static_cast<double>(cm.support) : 0.0;
    cm.f1 = cm.precision + cm.recall > 0.0
                ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                : 0.0;
    if (cm.support > 0) {
      ++supported;
      sum_p += cm.precision;
      sum_r += cm.recall;
      sum_f += cm.f1;
    }
    report.per_class[matrix.vocabulary[c]] = cm;
  }
  const auto denom = static_cast<double>(supported);
  report.macro_precision = sum_p / denom;
  report.macro_recall = sum_r / denom;
  report.macro_f1 = sum_f / denom;
  report.balanced_accuracy = report.macro_recall;
  return report;
}

nlohmann::json to_json(const ConfusionMatrix& m) {
  return {{"vocabulary", m.vocabulary},
          {"counts", m.counts},
          {"unparseable_by_class", m.unparseable_by_class},
          {"unparseable_count", m.unparseable_count()}};
}

nlohmann::json to_json(const ClassificationReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [label, c] : r.per_class) {
    per_class[label] = {
        {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
  }
  return {{"dataset", r.dataset},
          {"model", r.model},
          {"n", r.n},
          {"unparseable", r.unparseable},
          {"accuracy", r.accuracy},
          {"balanced_accuracy", r.balanced_accuracy},
          {"macro_precision", r.macro_precision},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1},
          {"per_class", per_class}};
}

ClassificationReport classification_report_from_json(const nlohmann::json& j) {
  try {
    ClassificationReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.n = j.at("n").get<std::size_t>();
    r.unparseable = j.value("unparseable", std::size_t{0});
    r.accuracy = j.at("accuracy").get<double>();
    r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
    r.macro_precision = j.at("macro_precision").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    for (const auto& [label, c] : j.at("per_class").items()) {
      r.per_class[label] = {c.at("precision").get<double>(), c.at("recall").get<double>(),
                            c.at("f1").get<double>(), c.at("support").get<std::size_t>()};
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("bad classification report: ") + e.what());
  }
}

}  // namespace medcap::clsmetrics
