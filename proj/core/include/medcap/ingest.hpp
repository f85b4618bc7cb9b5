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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medcap/datamodel.hpp"

namespace medcap::ingest {

/// Describes how one dataset's label CSV maps onto ImageRecords.
/// The image file for a row is `image_dir / (id + image_extension)`.
struct CsvAdapterConfig {
  std::string id_column;
  std::string label_column;
  std::optional<std::string> label_delimiter;
  std::filesystem::path image_dir;
  std::string image_extension;
  DatasetId dataset = DatasetId::kFundus;
};

struct IngestStats {
  std::size_t rows_read = 0;
  std::size_t emitted = 0;
  std::size_t multi_label_dropped = 0;
  std::size_t missing_image = 0;
  std::size_t out_of_vocabulary = 0;
  std::size_t empty_label = 0;
  /// Candidate pool size per canonical class.
  std::map<std::string, std::size_t> pool_sizes;
};

struct IngestResult {
  Manifest manifest;
  IngestStats stats;
};

/// Splits one CSV record (RFC 4180 quoting). Exposed for tests.
std::vector<std::string> split_csv_record(const std::string& line);

/// Throws ConfigError for a missing column or image directory and IoError for
/// an unreadable CSV. Rows keep CSV order.
IngestResult ingest_csv(const std::filesystem::path& csv_path, const CsvAdapterConfig& config,
                        const DatasetFamily& family);

struct ValidationReport {
  /// dataset -> class -> count
  std::map<std::string, std::map<std::string, std::size_t>> per_class_counts;
  /// Each duplicated image_id once, in first-seen order.
  std::vector<std::string> duplicate_ids;
  /// image_ids whose label (or dataset) is not in the configured vocabulary.
  std::vector<std::string> out_of_vocabulary;

  bool ok() const { return duplicate_ids.empty() && out_of_vocabulary.empty(); }
};

ValidationReport validate_manifest(const Manifest& manifest,
                                   const std::vector<DatasetFamily>& families);

nlohmann::json to_json(const IngestStats& stats);
nlohmann::json to_json(const ValidationReport& report);

}  // namespace medcap::ingest
