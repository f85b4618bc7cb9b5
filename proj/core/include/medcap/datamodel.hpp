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
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace medcap {

enum class DatasetId { kFundus, kDermatology, kChestXray };

std::string_view to_string(DatasetId id);
/// Accepts the wire names "fundus", "dermatology", "chest_xray".
DatasetId dataset_id_from_string(std::string_view name);

/// Synonym table applied after case folding and whitespace cleanup.
/// Keys and values are stored in folded form; chains (a value that is
/// itself a key for a different target) are rejected so canonicalization
/// stays idempotent.
class NormalizationConfig {
 public:
  NormalizationConfig() = default;
  explicit NormalizationConfig(const std::map<std::string, std::string>& synonyms);

  const std::map<std::string, std::string>& synonyms() const noexcept { return synonyms_; }
  bool empty() const noexcept { return synonyms_.empty(); }

 private:
  std::map<std::string, std::string> synonyms_;
};

struct CanonicalLabel {
  std::string raw;
  std::string canonical;

  friend bool operator==(const CanonicalLabel& a, const CanonicalLabel& b) {
    return a.canonical == b.canonical;
  }
};

/// Lowercase (ASCII), trim, collapse internal whitespace. No synonym lookup.
std::string fold_label(std::string_view raw);

/// Throws MalformedLabel when raw is empty after trimming.
CanonicalLabel canonicalize_label(std::string_view raw, const NormalizationConfig& config = {});

struct DatasetFamily {
  DatasetId id = DatasetId::kFundus;
  std::string display_name;
  std::vector<CanonicalLabel> class_vocabulary;
  NormalizationConfig normalization;

  /// Builds a family, canonicalizing the vocabulary against `normalization`.
  /// Throws ConfigError on an empty vocabulary or duplicates.
  static DatasetFamily make(DatasetId id, std::string display_name,
                            const std::vector<std::string>& vocabulary,
                            NormalizationConfig normalization = {});

  bool contains(std::string_view canonical) const;
  std::vector<std::string> canonical_names() const;
  CanonicalLabel canonicalize(std::string_view raw) const {
    return canonicalize_label(raw, normalization);
  }
};

/// Built-in vocabularies: 5 retinopathy grades, 7 pigmented lesion types and
/// 15 chest radiograph findings (14 pathologies plus "normal").
DatasetFamily default_fundus_family();
DatasetFamily default_dermatology_family();
DatasetFamily default_chest_xray_family();
std::vector<DatasetFamily> default_dataset_families();

struct ImageRecord {
  std::string image_id;
  std::filesystem::path image_path;
  DatasetId dataset = DatasetId::kFundus;
  CanonicalLabel ground_truth;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct DescriptionSections {
  std::string image_type;
  std::string anatomical_region;
  std::string key_findings;
  std::string clinical_significance;

  friend bool operator==(const DescriptionSections&, const DescriptionSections&) = default;
};

struct StructuredCaption {
  CanonicalLabel prediction;
  DescriptionSections description;

  friend bool operator==(const StructuredCaption& a, const StructuredCaption& b) {
    return a.prediction.raw == b.prediction.raw &&
           a.prediction.canonical == b.prediction.canonical && a.description == b.description;
  }
};

/// Section headers in their canonical order, as used in headed-text output.
inline constexpr std::string_view kSectionHeaders[4] = {
    "IMAGE TYPE", "ANATOMICAL REGION", "KEY FINDINGS", "CLINICAL SIGNIFICANCE"};
inline constexpr std::string_view kSectionKeys[4] = {
    "image_type", "anatomical_region", "key_findings", "clinical_significance"};

/// Parses a model response into a caption. Tolerates prose and code fences
/// around the first JSON object; accepts the description as a nested object
/// or as a string with the four uppercase headers.
///
/// Throws ParseFailure when no JSON object is present and SchemaViolation
/// naming the offending field otherwise.
StructuredCaption parse_structured_caption(std::string_view raw,
                                           const NormalizationConfig& config = {});

/// Canonical wire form: {"prediction": <raw label>, "description": {4 keys}}.
nlohmann::json caption_to_json(const StructuredCaption& caption);
/// Compact, key-sorted JSON text of caption_to_json.
std::string serialize_caption(const StructuredCaption& caption);

/// "IMAGE TYPE: ...\nANATOMICAL REGION: ...\n..." used for metric inputs.
std::string flatten_description(const DescriptionSections& sections);

enum class Verdict { kRetained, kRejectedMismatch, kRejectedMalformed };

std::string_view to_string(Verdict verdict);
Verdict verdict_from_string(std::string_view name);

struct DistillationSample {
  ImageRecord record;
  std::optional<StructuredCaption> teacher_output;
  std::string raw_response;
  Verdict verdict = Verdict::kRejectedMalformed;
  std::uint32_t attempt_index = 0;
};

/// Re-derives the verdict from stored fields.
Verdict derive_verdict(const ImageRecord& record,
                       const std::optional<StructuredCaption>& teacher_output);

nlohmann::json to_json(const ImageRecord& record);
ImageRecord image_record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DistillationSample& sample);
DistillationSample distillation_sample_from_json(const nlohmann::json& j);

using Manifest = std::vector<ImageRecord>;

/// One ImageRecord per line. Throws IoError / InputError.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

}  // namespace medcap
