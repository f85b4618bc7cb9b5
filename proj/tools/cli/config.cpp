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

#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "medcap/errors.hpp"
#include "medcap/report.hpp"
#include "medcap/util.hpp"

namespace medcap::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<DatasetFamily> RunConfig::families() const {
  std::vector<DatasetFamily> out;
  for (const auto& d : datasets) out.push_back(d.family);
  return out;
}

std::map<DatasetId, distill::PromptTemplate> RunConfig::prompts() const {
  std::map<DatasetId, distill::PromptTemplate> out;
  for (const auto& d : datasets) out.emplace(d.family.id, d.prompt);
  return out;
}

const DatasetConfig& RunConfig::dataset(DatasetId id) const {
  for (const auto& d : datasets) {
    if (d.family.id == id) return d;
  }
  throw ConfigError("dataset '" + std::string(to_string(id)) + "' is not configured");
}

const modelio::EndpointConfig& RunConfig::endpoint(const std::string& name) const {
  auto it = endpoints.find(name);
  if (it == endpoints.end()) throw ConfigError("unknown endpoint '" + name + "'");
  return it->second;
}

std::string RunConfig::label_for_role(const std::string& role) const {
  for (const auto& c : candidates) {
    if (c.role == role) return c.label;
  }
  return {};
}

std::string slug(std::string_view label) {
  std::string out;
  for (char c : label) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      out += static_cast<char>(std::tolower(u));
    } else if (!out.empty() && out.back() != '-') {
      out += '-';
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "model" : out;
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

fs::path resolve(const fs::path& base_dir, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base_dir / path).lexically_normal();
}

DatasetFamily default_family(DatasetId id) {
  switch (id) {
    case DatasetId::kFundus: return default_fundus_family();
    case DatasetId::kDermatology: return default_dermatology_family();
    case DatasetId::kChestXray: return default_chest_xray_family();
  }
  throw ConfigError("unknown dataset");
}

distill::QuotaPlan parse_quota(const json& j, const DatasetFamily& family) {
  if (j.is_null()) return distill::default_quota_plan(family);
  reject_unknown_keys(j, {"total", "per_class", "classes", "attempt_budget_per_class",
                          "budget_multiplier"},
                      "quota");
  const int multiplier = j.value("budget_multiplier", 10);
  if (multiplier < 1) throw ConfigError("budget_multiplier must be >= 1");
  distill::QuotaPlan plan;
  const int forms = static_cast<int>(j.contains("total")) +
                    static_cast<int>(j.contains("per_class")) +
                    static_cast<int>(j.contains("classes"));
  if (forms > 1) throw ConfigError("quota: give one of total, per_class or classes");
  if (j.contains("total")) {
    plan = distill::even_quota_plan(family, j.at("total").get<int>(), multiplier);
  } else if (j.contains("per_class")) {
    plan = distill::uniform_quota_plan(family, j.at("per_class").get<int>(), multiplier);
  } else if (j.contains("classes")) {
    plan.dataset = family.id;
    int max_quota = 0;
    for (const auto& name : family.canonical_names()) {
      if (!j["classes"].contains(name)) continue;
      const int q = j["classes"][name].get<int>();
      plan.per_class_quota.emplace_back(name, q);
      max_quota = std::max(max_quota, q);
    }
    if (plan.per_class_quota.size() != j["classes"].size()) {
      throw ConfigError("quota.classes names a class outside the " +
                        std::string(to_string(family.id)) + " vocabulary");
    }
    plan.attempt_budget_per_class = max_quota * multiplier;
  } else {
    plan = distill::default_quota_plan(family);
  }
  if (j.contains("attempt_budget_per_class")) {
    plan.attempt_budget_per_class = j.at("attempt_budget_per_class").get<int>();
  }
  plan.validate(family);
  return plan;
}

distill::PromptTemplate parse_prompt(const json& dataset_prompt, const json& global_prompt,
                                     const DatasetFamily& family) {
  std::string system = distill::default_system_prompt();
  std::string user = distill::default_user_prompt();
  for (const json* p : {&global_prompt, &dataset_prompt}) {
    if (p->is_null()) continue;
    reject_unknown_keys(*p, {"system", "user"}, "prompt");
    system = p->value("system", system);
    user = p->value("user", user);
  }
  return distill::PromptTemplate::make(system, user, family.canonical_names());
}

DatasetConfig parse_dataset(const json& j, const json& global_prompt, const fs::path& base_dir) {
  reject_unknown_keys(j,
                      {"id", "display_name", "vocabulary", "synonyms", "csv", "id_column",
                       "label_column", "label_delimiter", "image_dir", "image_extension", "quota",
                       "prompt"},
                      "dataset");
  DatasetConfig d;
  const auto id = dataset_id_from_string(j.at("id").get<std::string>());
  auto family = default_family(id);
  if (j.contains("vocabulary") || j.contains("synonyms") || j.contains("display_name")) {
    std::vector<std::string> vocabulary = family.canonical_names();
    if (j.contains("vocabulary")) vocabulary = j["vocabulary"].get<std::vector<std::string>>();
    auto synonyms = family.normalization.synonyms();
    if (j.contains("synonyms")) {
      synonyms = j["synonyms"].get<std::map<std::string, std::string>>();
    }
    family = DatasetFamily::make(id, j.value("display_name", family.display_name), vocabulary,
                                 NormalizationConfig(synonyms));
  }
  d.family = std::move(family);
  d.csv = resolve(base_dir, j.at("csv").get<std::string>());
  d.adapter.id_column = j.at("id_column").get<std::string>();
  d.adapter.label_column = j.at("label_column").get<std::string>();
  if (j.contains("label_delimiter") && !j["label_delimiter"].is_null()) {
    d.adapter.label_delimiter = j["label_delimiter"].get<std::string>();
  }
  d.adapter.image_dir = resolve(base_dir, j.at("image_dir").get<std::string>());
  d.adapter.image_extension = j.value("image_extension", "");
  d.adapter.dataset = id;
  d.quota = parse_quota(j.value("quota", json()), d.family);
  d.prompt = parse_prompt(j.value("prompt", json()), global_prompt, d.family);
  return d;
}

}  // namespace

RunConfig parse_config(const json& j, const fs::path& base_dir) {
  try {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    reject_unknown_keys(j,
                        {"run_dir", "seed", "endpoints", "roles", "datasets", "prompts", "split",
                         "metrics", "encode", "report", "validation"},
                        "configuration");
    RunConfig c;
    c.raw = j;
    c.hash = sha256_hex(j.dump());
    if (j.contains("run_dir")) c.run_dir = resolve(base_dir, j["run_dir"].get<std::string>());
    c.seed = j.value("seed", c.seed);

    for (const auto& e : j.at("endpoints")) {
      auto endpoint = modelio::endpoint_config_from_json(e);
      const auto name = endpoint.name;
      if (!c.endpoints.emplace(name, std::move(endpoint)).second) {
        throw ConfigError("duplicate endpoint name '" + name + "'");
      }
    }

    const auto& roles = j.at("roles");
    reject_unknown_keys(roles, {"teacher", "judge", "embedder", "candidates"}, "roles");
    if (!roles.contains("teacher") || !roles["teacher"].is_string()) {
      throw ConfigError("roles.teacher must name exactly one endpoint");
    }
    c.teacher = roles["teacher"].get<std::string>();
    c.judge = roles.value("judge", "");
    c.embedder = roles.value("embedder", "");
    std::set<std::string> labels;
    for (const auto& cand : roles.value("candidates", json::array())) {
      reject_unknown_keys(cand, {"label", "endpoint", "role"}, "candidate");
      CandidateConfig cc{cand.at("label").get<std::string>(),
                         cand.at("endpoint").get<std::string>(), cand.value("role", "")};
      if (cc.role != "" && cc.role != "base" && cc.role != "finetuned") {
        throw ConfigError("candidate role must be 'base' or 'finetuned'");
      }
      if (!labels.insert(slug(cc.label)).second) {
        throw ConfigError("duplicate candidate label '" + cc.label + "'");
      }
      c.candidates.push_back(std::move(cc));
    }
    for (const auto& role : {"base", "finetuned"}) {
      const auto n = std::count_if(c.candidates.begin(), c.candidates.end(),
                                   [&](const CandidateConfig& cc) { return cc.role == role; });
      if (n > 1) throw ConfigError(std::string("more than one candidate has role ") + role);
    }
    std::vector<std::string> referenced{c.teacher};
    if (!c.judge.empty()) referenced.push_back(c.judge);
    if (!c.embedder.empty()) referenced.push_back(c.embedder);
    for (const auto& cc : c.candidates) referenced.push_back(cc.endpoint);
    for (const auto& name : referenced) c.endpoint(name);

    const json global_prompt = j.value("prompts", json());
    std::set<DatasetId> seen;
    for (const auto& dj : j.at("datasets")) {
      auto d = parse_dataset(dj, global_prompt, base_dir);
      if (!seen.insert(d.family.id).second) {
        throw ConfigError("dataset '" + std::string(to_string(d.family.id)) + "' listed twice");
      }
      c.datasets.push_back(std::move(d));
    }
    if (c.datasets.empty()) throw ConfigError("no datasets configured");

    if (j.contains("split")) {
      const auto& s = j["split"];
      reject_unknown_keys(s, {"ratios", "seed"}, "split");
      if (s.contains("ratios")) {
        const auto r = s["ratios"].get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("split.ratios must have three entries");
        c.split_ratios = {r[0], r[1], r[2]};
      }
      c.seed = s.value("seed", c.seed);
    }
    double sum = 0.0;
    for (double r : c.split_ratios) {
      if (r < 0.0) throw ConfigError("split ratios must be non-negative");
      sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    if (j.contains("metrics")) {
      const auto& m = j["metrics"];
      reject_unknown_keys(m, {"n_questions", "correctness_weights", "parallelism"}, "metrics");
      c.metrics.n_questions = m.value("n_questions", c.metrics.n_questions);
      if (m.contains("correctness_weights")) {
        const auto w = m["correctness_weights"].get<std::vector<double>>();
        if (w.size() != 2) throw ConfigError("metrics.correctness_weights must have two entries");
        c.metrics.correctness_weights = {w[0], w[1]};
      }
      c.metrics.parallelism = m.value("parallelism", c.metrics.parallelism);
    }
    c.metrics.validate();

    if (j.contains("encode")) {
      const auto& e = j["encode"];
      reject_unknown_keys(e, {"max_dimension", "jpeg_quality"}, "encode");
      c.encode.max_dimension = e.value("max_dimension", c.encode.max_dimension);
      c.encode.jpeg_quality = e.value("jpeg_quality", c.encode.jpeg_quality);
      if (c.encode.max_dimension < 1) throw ConfigError("encode.max_dimension must be >= 1");
      if (c.encode.jpeg_quality < 1 || c.encode.jpeg_quality > 100) {
        throw ConfigError("encode.jpeg_quality must be in [1, 100]");
      }
    }
    if (j.contains("report")) {
      reject_unknown_keys(j["report"], {"formats"}, "report");
      c.report_formats = j["report"].value("formats", c.report_formats);
      for (const auto& f : c.report_formats) report::format_from_string(f);
    }
    if (j.contains("validation")) {
      reject_unknown_keys(j["validation"], {"override"}, "validation");
      c.override_validation = j["validation"].value("override", false);
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad configuration: ") + e.what());
  }
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file_text(path);
  } catch (const Error& e) {
    throw ConfigError("cannot read configuration " + path.string() + ": " + e.what());
  }
  auto j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("configuration " + path.string() + " is not valid JSON");
  auto config = parse_config(j, fs::absolute(path).parent_path());
  config.source = fs::absolute(path);
  return config;
}

}  // namespace medcap::cli
