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

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medcap/datamodel.hpp"

namespace medcap::clsmetrics {

/// counts[t][p]: samples of true class t predicted as p. Predictions that
/// were absent or outside the vocabulary are only in unparseable_by_class.
struct ConfusionMatrix {
  std::vector<std::string> vocabulary;
  std::vector<std::vector<std::size_t>> counts;
  /// Unparseable predictions per true class (same order as vocabulary).
  std::vector<std::size_t> unparseable_by_class;

  static ConfusionMatrix zeros(std::vector<std::string> vocabulary);

  std::size_t unparseable_count() const;
  std::size_t matrix_total() const;
  std::size_t support(std::size_t true_class) const;
};

struct LabelPair {
  std::string truth;
  std::optional<std::string> prediction;
};

/// Throws InputError when a truth label is outside the vocabulary.
ConfusionMatrix build_confusion(const std::vector<LabelPair>& pairs,
                                const std::vector<std::string>& vocabulary);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  std::string dataset;
  std::string model;
  std::size_t n = 0;
  std::size_t unparseable = 0;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::map<std::string, ClassMetrics> per_class;
};

/// Zero denominators give 0 for that class metric; classes without support
/// are left out of the macro averages. Throws EmptyInput on an empty matrix.
ClassificationReport compute_metrics(const ConfusionMatrix& matrix);

nlohmann::json to_json(const ConfusionMatrix& matrix);
nlohmann::json to_json(const ClassificationReport& report);
ClassificationReport classification_report_from_json(const nlohmann::json& j);

}  // namespace medcap::clsmetrics
