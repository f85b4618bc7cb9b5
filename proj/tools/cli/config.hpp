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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcap/capmetrics.hpp"
#include "medcap/corpus.hpp"
#include "medcap/datamodel.hpp"
#include "medcap/distill.hpp"
#include "medcap/ingest.hpp"
#include "medcap/modelio/image.hpp"
#include "medcap/modelio/types.hpp"

namespace medcap::cli {

struct CandidateConfig {
  /// Model label used in reports, e.g. "Base".
  std::string label;
  std::string endpoint;
  /// "base", "finetuned" or empty.
  std::string role;
};

struct DatasetConfig {
  DatasetFamily family;
  std::filesystem::path csv;
  ingest::CsvAdapterConfig adapter;
  distill::QuotaPlan quota;
  distill::PromptTemplate prompt;
};

/// One declarative run configuration. Secrets are never stored here; each
/// endpoint names the environment variable holding its key.
struct RunConfig {
  std::filesystem::path source;
  nlohmann::json raw;
  /// SHA-256 of the canonical (sorted-key) dump of `raw`.
  std::string hash;
  std::optional<std::filesystem::path> run_dir;

  std::map<std::string, modelio::EndpointConfig> endpoints;
  std::string teacher;
  std::string judge;
  std::string embedder;
  std::vector<CandidateConfig> candidates;

  std::vector<DatasetConfig> datasets;
  corpus::Ratios split_ratios{0.7, 0.2, 0.1};
  std::uint64_t seed = 42;
  capmetrics::MetricOptions metrics;
  modelio::EncodePolicy encode;
  std::vector<std::string> report_formats{"json", "csv", "table-text"};
  bool override_validation = false;

  std::vector<DatasetFamily> families() const;
  std::map<DatasetId, distill::PromptTemplate> prompts() const;
  const DatasetConfig& dataset(DatasetId id) const;
  /// Throws ConfigError for an unknown name.
  const modelio::EndpointConfig& endpoint(const std::string& name) const;
  /// Label of the candidate with the given role, or empty.
  std::string label_for_role(const std::string& role) const;
};

/// Relative paths are resolved against `base_dir`. Throws ConfigError.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
/// Throws ConfigError when the file is missing or malformed.
RunConfig load_config(const std::filesystem::path& path);

/// Filesystem-safe form of a candidate label ("Fine-Tuned" -> "fine-tuned").
std::string slug(std::string_view label);

}  // namespace medcap::cli
