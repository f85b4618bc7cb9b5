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

#include "medcap/datamodel.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <nlohmann/json.hpp>
#include <set>

#include "medcap/errors.hpp"
#include "medcap/util.hpp"

namespace medcap {

using nlohmann::json;

std::string_view to_string(DatasetId id) {
  switch (id) {
    case DatasetId::kFundus: return "fundus";
    case DatasetId::kDermatology: return "dermatology";
    case DatasetId::kChestXray: return "chest_xray";
  }
  return "unknown";
}

DatasetId dataset_id_from_string(std::string_view name) {
  if (name == "fundus") return DatasetId::kFundus;
  if (name == "dermatology") return DatasetId::kDermatology;
  if (name == "chest_xray") return DatasetId::kChestXray;
  throw InputError("unknown dataset '" + std::string(name) + "'");
}

std::string fold_label(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

NormalizationConfig::NormalizationConfig(const std::map<std::string, std::string>& synonyms) {
  for (const auto& [from, to] : synonyms) {
    auto key = fold_label(from);
    auto value = fold_label(to);
    if (key.empty() || value.empty()) throw ConfigError("empty synonym entry");
    synonyms_[key] = value;
  }
  for (const auto& [key, value] : synonyms_) {
    auto it = synonyms_.find(value);
    if (it != synonyms_.end() && it->second != value) {
      throw ConfigError("synonym chain: '" + key + "' -> '" + value + "' -> '" + it->second + "'");
    }
  }
}

CanonicalLabel canonicalize_label(std::string_view raw, const NormalizationConfig& config) {
  auto folded = fold_label(raw);
  if (folded.empty()) throw MalformedLabel(std::string(raw));
  if (auto it = config.synonyms().find(folded); it != config.synonyms().end()) {
    folded = it->second;
  }
  return CanonicalLabel{std::string(raw), std::move(folded)};
}

DatasetFamily DatasetFamily::make(DatasetId id, std::string display_name,
                                  const std::vector<std::string>& vocabulary,
                                  NormalizationConfig normalization) {
  if (vocabulary.empty()) {
    throw ConfigError("empty class vocabulary for " + std::string(to_string(id)));
  }
  DatasetFamily family;
  family.id = id;
  family.display_name = std::move(display_name);
  family.normalization = std::move(normalization);
  std::set<std::string> seen;
  for (const auto& name : vocabulary) {
    auto label = canonicalize_label(name, family.normalization);
    if (!seen.insert(label.canonical).second) {
      throw ConfigError("duplicate class '" + label.canonical + "' in " +
                        std::string(to_string(id)) + " vocabulary");
    }
    family.class_vocabulary.push_back(std::move(label));
  }
  return family;
}

bool DatasetFamily::contains(std::string_view canonical) const {
  return std::any_of(class_vocabulary.begin(), class_vocabulary.end(),
                     [&](const CanonicalLabel& l) { return l.canonical == canonical; });
}

std::vector<std::string> DatasetFamily::canonical_names() const {
  std::vector<std::string> names;
  names.reserve(class_vocabulary.size());
  for (const auto& l : class_vocabulary) names.push_back(l.canonical);
  return names;
}

DatasetFamily default_fundus_family() {
  return DatasetFamily::make(
      DatasetId::kFundus, "Fundus", {"grade 0", "grade 1", "grade 2", "grade 3", "grade 4"},
      NormalizationConfig({{"0", "grade 0"},
                           {"1", "grade 1"},
                           {"2", "grade 2"},
                           {"3", "grade 3"},
                           {"4", "grade 4"},
                           {"no dr", "grade 0"},
                           {"mild", "grade 1"},
                           {"moderate", "grade 2"},
                           {"severe", "grade 3"},
                           {"proliferative dr", "grade 4"}}));
}

DatasetFamily default_dermatology_family() {
  return DatasetFamily::make(
      DatasetId::kDermatology, "Dermatology",
      {"actinic keratosis", "basal cell carcinoma", "benign keratosis", "dermatofibroma",
       "melanoma", "melanocytic nevus", "vascular lesion"},
      NormalizationConfig({{"akiec", "actinic keratosis"},
                           {"actinic keratoses", "actinic keratosis"},
                           {"bcc", "basal cell carcinoma"},
                           {"bkl", "benign keratosis"},
                           {"benign keratosis-like lesion", "benign keratosis"},
                           {"df", "dermatofibroma"},
                           {"mel", "melanoma"},
                           {"nv", "melanocytic nevus"},
                           {"melanocytic nevi", "melanocytic nevus"},
                           {"vasc", "vascular lesion"},
                           {"vascular lesions", "vascular lesion"}}));
}

DatasetFamily default_chest_xray_family() {
  return DatasetFamily::make(
      DatasetId::kChestXray, "Chest-Xray",
      {"atelectasis", "cardiomegaly", "effusion", "infiltration", "mass", "nodule", "pneumonia",
       "pneumothorax", "consolidation", "edema", "emphysema", "fibrosis", "pleural thickening",
       "hernia", "normal"},
      NormalizationConfig({{"no finding", "normal"},
                           {"pleural_thickening", "pleural thickening"},
                           {"pleural effusion", "effusion"}}));
}

std::vector<DatasetFamily> default_dataset_families() {
  return {default_fundus_family(), default_dermatology_family(), default_chest_xray_family()};
}

// ---------------------------------------------------------------------------
// Structured caption parsing

namespace {

std::string normalize_key(std::string_view key) {
  std::string out;
  for (char ch : trim(key)) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (!out.empty() && out.back() != '_') {
      out.push_back('_');
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  // "1_image_type" style keys from numbered section lists.
  std::size_t digits = 0;
  while (digits < out.size() && std::isdigit(static_cast<unsigned char>(out[digits]))) ++digits;
  if (digits > 0 && digits < out.size() && out[digits] == '_') out.erase(0, digits + 1);
  return out;
}

const json* find_key(const json& object, std::string_view wanted) {
  for (auto it = object.begin(); it != object.end(); ++it) {
    if (normalize_key(it.key()) == wanted) return &it.value();
  }
  return nullptr;
}

std::string section_text(const json& value) {
  if (value.is_string()) return trim(value.get<std::string>());
  if (value.is_array()) {
    std::string joined;
    for (const auto& item : value) {
      if (!item.is_string()) return {};
      auto part = trim(item.get<std::string>());
      if (part.empty()) continue;
      if (!joined.empty()) joined += "; ";
      joined += part;
    }
    return joined;
  }
  return {};
}

// Drops a trailing list enumerator ("... 2.") left behind by the next header.
std::string strip_trailing_enumerator(std::string text) {
  text = trim(text);
  std::size_t end = text.size();
  if (end > 0 && (text[end - 1] == '.' || text[end - 1] == ')')) {
    std::size_t p = end - 1;
    std::size_t digits = 0;
    while (p > 0 && std::isdigit(static_cast<unsigned char>(text[p - 1]))) {
      --p;
      ++digits;
    }
    if (digits > 0 && (p == 0 || std::isspace(static_cast<unsigned char>(text[p - 1])))) {
      text.erase(p);
    }
  }
  text = trim(text);
  while (!text.empty() && (text.back() == '*' || text.back() == '-')) text.pop_back();
  return trim(text);
}

DescriptionSections parse_headed_description(const std::string& text, std::string_view raw) {
  struct Hit {
    std::size_t header_pos;
    std::size_t body_pos;
    int index;
  };
  std::vector<Hit> hits;
  for (int i = 0; i < 4; ++i) {
    const auto header = kSectionHeaders[i];
    const auto pos = text.find(header);
    if (pos == std::string::npos) continue;
    std::size_t body = pos + header.size();
    while (body < text.size() && (text[body] == '*' || text[body] == ' ')) ++body;
    if (body < text.size() && (text[body] == ':' || text[body] == '-')) ++body;
    hits.push_back({pos, body, i});
  }
  std::sort(hits.begin(), hits.end(),
            [](const Hit& a, const Hit& b) { return a.header_pos < b.header_pos; });
  std::array<std::string, 4> bodies;
  for (std::size_t h = 0; h < hits.size(); ++h) {
    const auto end = h + 1 < hits.size() ? hits[h + 1].header_pos : text.size();
    auto begin = std::min(hits[h].body_pos, end);
    bodies[static_cast<std::size_t>(hits[h].index)] =
        strip_trailing_enumerator(text.substr(begin, end - begin));
  }
  for (int i = 0; i < 4; ++i) {
    if (bodies[static_cast<std::size_t>(i)].empty()) {
      throw SchemaViolation(std::string(kSectionKeys[i]), std::string(raw));
    }
  }
  return {bodies[0], bodies[1], bodies[2], bodies[3]};
}

}  // namespace

StructuredCaption parse_structured_caption(std::string_view raw, const NormalizationConfig& config) {
  auto object = find_json(raw, '{');
  if (!object) throw ParseFailure("no JSON object in model response", std::string(raw));

  const json* prediction = find_key(*object, "prediction");
  if (prediction == nullptr) throw SchemaViolation("prediction", std::string(raw));
  std::string prediction_text;
  if (prediction->is_string()) {
    prediction_text = prediction->get<std::string>();
  } else if (prediction->is_number_integer()) {
    prediction_text = std::to_string(prediction->get<long long>());
  } else {
    throw SchemaViolation("prediction", std::string(raw));
  }

  StructuredCaption caption;
  try {
    caption.prediction = canonicalize_label(prediction_text, config);
  } catch (const MalformedLabel&) {
    throw SchemaViolation("prediction", std::string(raw));
  }

  const json* description = find_key(*object, "description");
  if (description == nullptr) throw SchemaViolation("description", std::string(raw));
  if (description->is_object()) {
    std::array<std::string, 4> fields;
    for (std::size_t i = 0; i < 4; ++i) {
      const json* value = find_key(*description, kSectionKeys[i]);
      if (value != nullptr) fields[i] = section_text(*value);
      if (fields[i].empty()) throw SchemaViolation(std::string(kSectionKeys[i]), std::string(raw));
    }
    caption.description = {fields[0], fields[1], fields[2], fields[3]};
  } else if (description->is_string()) {
    caption.description = parse_headed_description(description->get<std::string>(), raw);
  } else {
    throw SchemaViolation("description", std::string(raw));
  }
  return caption;
}

json caption_to_json(const StructuredCaption& caption) {
  const auto& d = caption.description;
  return json{{"prediction", caption.prediction.raw},
              {"description",
               {{"image_type", d.image_type},
                {"anatomical_region", d.anatomical_region},
                {"key_findings", d.key_findings},
                {"clinical_significance", d.clinical_significance}}}};
}

std::string serialize_caption(const StructuredCaption& caption) {
  return caption_to_json(caption).dump();
}

std::string flatten_description(const DescriptionSections& s) {
  std::string out;
  const std::string* bodies[4] = {&s.image_type, &s.anatomical_region, &s.key_findings,
                                  &s.clinical_significance};
  for (std::size_t i = 0; i < 4; ++i) {
    if (i > 0) out += '\n';
    out += kSectionHeaders[i];
    out += ": ";
    out += *bodies[i];
  }
  return out;
}

std::string_view to_string(Verdict verdict) {
  switch (verdict) {
    case Verdict::kRetained: return "retained";
    case Verdict::kRejectedMismatch: return "rejected_mismatch";
    case Verdict::kRejectedMalformed: return "rejected_malformed";
  }
  return "unknown";
}

Verdict verdict_from_string(std::string_view name) {
  if (name == "retained") return Verdict::kRetained;
  if (name == "rejected_mismatch") return Verdict::kRejectedMismatch;
  if (name == "rejected_malformed") return Verdict::kRejectedMalformed;
  throw InputError("unknown verdict '" + std::string(name) + "'");
}

Verdict derive_verdict(const ImageRecord& record,
                       const std::optional<StructuredCaption>& teacher_output) {
  if (!teacher_output) return Verdict::kRejectedMalformed;
  return teacher_output->prediction.canonical == record.ground_truth.canonical
             ? Verdict::kRetained
             : Verdict::kRejectedMismatch;
}

json to_json(const ImageRecord& record) {
  return json{{"image_id", record.image_id},
              {"image_path", record.image_path.generic_string()},
              {"dataset", to_string(record.dataset)},
              {"ground_truth", record.ground_truth.canonical}};
}

ImageRecord image_record_from_json(const json& j) {
  try {
    ImageRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.image_path = j.at("image_path").get<std::string>();
    r.dataset = dataset_id_from_string(j.at("dataset").get<std::string>());
    const auto gt = j.at("ground_truth").get<std::string>();
    r.ground_truth = CanonicalLabel{gt, gt};
    if (r.image_id.empty()) throw InputError("empty image_id");
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("bad ImageRecord: ") + e.what());
  }
}

json to_json(const DistillationSample& sample) {
  json j{{"record", to_json(sample.record)},
         {"raw_response", sample.raw_response},
         {"verdict", to_string(sample.verdict)},
         {"attempt_index", sample.attempt_index}};
  if (sample.teacher_output) {
    j["teacher_output"] = caption_to_json(*sample.teacher_output);
    j["teacher_output"]["prediction_canonical"] = sample.teacher_output->prediction.canonical;
  } else {
    j["teacher_output"] = nullptr;
  }
  return j;
}

DistillationSample distillation_sample_from_json(const json& j) {
  try {
    DistillationSample s;
    s.record = image_record_from_json(j.at("record"));
    s.raw_response = j.at("raw_response").get<std::string>();
    s.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    s.attempt_index = j.at("attempt_index").get<std::uint32_t>();
    const auto& out = j.at("teacher_output");
    if (!out.is_null()) {
      StructuredCaption c;
      c.prediction.raw = out.at("prediction").get<std::string>();
      c.prediction.canonical = out.at("prediction_canonical").get<std::string>();
      const auto& d = out.at("description");
      c.description = {d.at("image_type").get<std::string>(),
                       d.at("anatomical_region").get<std::string>(),
                       d.at("key_findings").get<std::string>(),
                       d.at("clinical_significance").get<std::string>()};
      s.teacher_output = std::move(c);
    }
    return s;
  } catch (const json::exception& e) {
    throw InputError(std::string("bad DistillationSample: ") + e.what());
  }
}

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest manifest;
  for (const auto& j : read_jsonl(path).records) manifest.push_back(image_record_from_json(j));
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::vector<json> lines;
  lines.reserve(manifest.size());
  for (const auto& r : manifest) lines.push_back(to_json(r));
  write_jsonl(path, lines);
}

}  // namespace medcap
