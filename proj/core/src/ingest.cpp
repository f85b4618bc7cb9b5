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

#include "medcap/ingest.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <unordered_map>

#include "medcap/errors.hpp"
#include "medcap/util.hpp"

namespace medcap::ingest {

std::vector<std::string> split_csv_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

namespace {

// Reads one logical record; quoted fields may span physical lines.
bool read_record(std::istream& in, std::string& record) {
  record.clear();
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    if (any) record.push_back('\n');
    record += line;
    any = true;
    if (std::count(record.begin(), record.end(), '"') % 2 == 0) return true;
  }
  return any;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         const std::filesystem::path& csv_path) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (trim(header[i]) == name) return i;
  }
  throw ConfigError("column '" + name + "' not found in " + csv_path.string());
}

}  // namespace

IngestResult ingest_csv(const std::filesystem::path& csv_path, const CsvAdapterConfig& config,
                        const DatasetFamily& family) {
  if (config.id_column == config.label_column) {
    throw ConfigError("id_column and label_column must differ");
  }
  if (!std::filesystem::is_directory(config.image_dir)) {
    throw ConfigError("image_dir does not exist: " + config.image_dir.string());
  }
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw IoError("cannot read " + csv_path.string());

  std::string record;
  if (!read_record(in, record)) throw ConfigError("empty CSV: " + csv_path.string());
  if (record.starts_with("\xEF\xBB\xBF")) record.erase(0, 3);
  const auto header = split_csv_record(record);
  const auto id_col = column_index(header, config.id_column, csv_path);
  const auto label_col = column_index(header, config.label_column, csv_path);

  IngestResult result;
  auto& stats = result.stats;
  for (const auto& label : family.class_vocabulary) stats.pool_sizes[label.canonical] = 0;

  while (read_record(in, record)) {
    if (trim(record).empty()) continue;
    ++stats.rows_read;
    const auto fields = split_csv_record(record);
    if (fields.size() <= std::max(id_col, label_col)) {
      ++stats.empty_label;
      continue;
    }
    const auto id = trim(fields[id_col]);
    const auto cell = fields[label_col];

    std::vector<std::string> parts;
    if (config.label_delimiter && !config.label_delimiter->empty()) {
      std::size_t start = 0;
      const auto& delim = *config.label_delimiter;
      for (;;) {
        const auto pos = cell.find(delim, start);
        parts.push_back(cell.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + delim.size();
      }
    } else {
      parts.push_back(cell);
    }

    std::set<std::string> findings;
    std::optional<CanonicalLabel> label;
    for (const auto& part : parts) {
      if (trim(part).empty()) continue;
      auto canonical = family.canonicalize(part);
      if (findings.insert(canonical.canonical).second && !label) label = canonical;
    }
    if (id.empty() || findings.empty()) {
      ++stats.empty_label;
      continue;
    }
    if (findings.size() > 1) {
      ++stats.multi_label_dropped;
      continue;
    }
    if (!family.contains(label->canonical)) {
      ++stats.out_of_vocabulary;
      continue;
    }
    auto image_path = config.image_dir / (id + config.image_extension);
    if (!std::filesystem::is_regular_file(image_path)) {
      ++stats.missing_image;
      continue;
    }
    ++stats.pool_sizes[label->canonical];
    result.manifest.push_back(ImageRecord{id, std::move(image_path), family.id, *label});
  }
  stats.emitted = result.manifest.size();
  spdlog::info("ingest {}: {} rows, {} emitted, {} multi-label, {} missing image, {} out of vocab",
               to_string(family.id), stats.rows_read, stats.emitted, stats.multi_label_dropped,
               stats.missing_image, stats.out_of_vocabulary);
  return result;
}

ValidationReport validate_manifest(const Manifest& manifest,
                                   const std::vector<DatasetFamily>& families) {
  ValidationReport report;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& r : manifest) {
    const auto count = ++seen[r.image_id];
    if (count == 2) report.duplicate_ids.push_back(r.image_id);

    const auto family = std::find_if(families.begin(), families.end(),
                                     [&](const DatasetFamily& f) { return f.id == r.dataset; });
    const auto dataset = std::string(to_string(r.dataset));
    if (family == families.end() || !family->contains(r.ground_truth.canonical)) {
      report.out_of_vocabulary.push_back(r.image_id);
      continue;
    }
    ++report.per_class_counts[dataset][r.ground_truth.canonical];
  }
  return report;
}

nlohmann::json to_json(const IngestStats& s) {
  return {{"rows_read", s.rows_read},
          {"emitted", s.emitted},
          {"multi_label_dropped", s.multi_label_dropped},
          {"missing_image", s.missing_image},
          {"out_of_vocabulary", s.out_of_vocabulary},
          {"empty_label", s.empty_label},
          {"pool_sizes", s.pool_sizes}};
}

nlohmann::json to_json(const ValidationReport& r) {
  return {{"per_class_counts", r.per_class_counts},
          {"duplicate_ids", r.duplicate_ids},
          {"out_of_vocabulary", r.out_of_vocabulary},
          {"ok", r.ok()}};
}

}  // namespace medcap::ingest
