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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcap/capmetrics.hpp"
#include "medcap/clsmetrics.hpp"
#include "medcap/datamodel.hpp"

namespace medcap::report {

struct ClassificationRow {
  std::string model;
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t unparseable = 0;

  bool operator==(const ClassificationRow&) const = default;
};

struct CaptionRow {
  std::string model;
  std::optional<double> faithfulness;
  std::optional<double> answer_relevancy;
  std::optional<double> answer_correctness;

  bool operator==(const CaptionRow&) const = default;
};

/// Fine-tuned minus base. Caption deltas are absent when either side is.
struct DeltaRow {
  std::optional<double> accuracy;
  std::optional<double> balanced_accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> faithfulness;
  std::optional<double> answer_relevancy;
  std::optional<double> answer_correctness;

  bool operator==(const DeltaRow&) const = default;
};

struct DatasetBlock {
  std::string dataset;
  std::string display_name;
  std::size_t n = 0;
  std::vector<ClassificationRow> classification;
  std::vector<CaptionRow> caption;
  std::optional<DeltaRow> delta;

  bool operator==(const DatasetBlock&) const = default;
};

struct RunMetadata {
  std::uint64_t seed = 0;
  std::string config_hash;
  /// role -> "endpoint name / model name".
  std::map<std::string, std::string> endpoints;
  std::string base_label = "Base";
  std::string finetuned_label = "Fine-Tuned";

  bool operator==(const RunMetadata&) const = default;
};

struct ComparisonReport {
  std::vector<DatasetBlock> datasets;
  RunMetadata metadata;

  bool operator==(const ComparisonReport&) const = default;
};

enum class Format { kJson, kCsv, kTableText };

/// Throws ConfigError on unknown names ("json", "csv", "table-text").
Format format_from_string(std::string_view name);
std::string_view to_string(Format format);

/// Recomputes every block's delta from the rows labelled base_label and
/// finetuned_label; blocks lacking either model get no delta.
void compute_deltas(ComparisonReport& report);

/// Per-model inputs for one report. Blocks follow family order; deltas are
/// filled in.
struct ModelResults {
  std::string label;
  std::map<DatasetId, clsmetrics::ClassificationReport> classification;
  std::map<std::string, capmetrics::DatasetCaptionSummary> captions;
};

ComparisonReport assemble(const std::vector<ModelResults>& models,
                          const std::vector<DatasetFamily>& families, RunMetadata metadata);

/// Deterministic rendering. Throws EmptyInput when the report has no blocks
/// and ConfigError for an unknown format.
std::string render(const ComparisonReport& report, Format format);
std::string render(const ComparisonReport& report, std::string_view format);

nlohmann::json to_json(const ComparisonReport& report);
/// Throws InputError on schema mismatch.
ComparisonReport report_from_json(const nlohmann::json& j);

}  // namespace medcap::report
