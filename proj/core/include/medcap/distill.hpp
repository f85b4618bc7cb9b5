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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medcap/datamodel.hpp"
#include "medcap/modelio/client.hpp"
#include "medcap/modelio/image.hpp"

namespace medcap::distill {

inline constexpr std::string_view kGuardrailClause =
    "Act as an interpretive tool only and do not provide management advice.";
inline constexpr std::string_view kClassesPlaceholder = "{classes}";
/// Appended to the user prompt when re-asking after malformed output.
inline constexpr std::string_view kReaskNudge =
    "Your previous reply was not a valid JSON object in the required format. "
    "Reply with the JSON object only.";

/// System prompt (persona, schema mandate, guardrail) plus the user query.
/// The system prompt may contain "{classes}", replaced by the injected class
/// list when rendered; without it the list is appended.
struct PromptTemplate {
  std::string system_prompt;
  std::string user_prompt;
  std::vector<std::string> class_list_injection;

  /// Throws ConfigError unless the system prompt names all four sections and
  /// carries the guardrail clause.
  static PromptTemplate make(std::string system_prompt, std::string user_prompt,
                             std::vector<std::string> classes);

  std::string render_system() const;
};

std::string default_system_prompt();
std::string default_user_prompt();
PromptTemplate default_template(const DatasetFamily& family);

struct QuotaPlan {
  DatasetId dataset = DatasetId::kFundus;
  /// Ordered as the classes are visited round-robin.
  std::vector<std::pair<std::string, int>> per_class_quota;
  int attempt_budget_per_class = 0;

  void validate(const DatasetFamily& family) const;
  int quota_for(std::string_view label) const;
};

/// Spreads `total` over the vocabulary: every class gets total / k and the
/// first total % k classes (vocabulary order) get one more.
QuotaPlan even_quota_plan(const DatasetFamily& family, int total, int budget_multiplier = 10);
QuotaPlan uniform_quota_plan(const DatasetFamily& family, int per_class, int budget_multiplier = 10);
/// fundus 100 x 5; dermatology 676 over 7 classes; chest x-ray 50 per class.
QuotaPlan default_quota_plan(const DatasetFamily& family);

struct ClassYield {
  std::size_t attempted = 0;
  std::size_t retained = 0;
  std::size_t rejected_mismatch = 0;
  std::size_t rejected_malformed = 0;
  std::size_t transport_failures = 0;
  /// Not sent: image file could not be decoded. Not part of `attempted`.
  std::size_t skipped_undecodable = 0;
};

struct ExcludedClass {
  std::string label;
  std::string reason;  // "budget_exhausted" or "pool_exhausted"
};

struct YieldStats {
  std::map<std::string, ClassYield> per_class;
  std::vector<ExcludedClass> excluded_classes;

  bool is_excluded(std::string_view label) const;
};

nlohmann::json to_json(const YieldStats& stats);

struct GenerationResult {
  std::optional<DistillationSample> sample;
  std::string transport_error;
  bool undecodable = false;
};

/// One teacher call (plus at most one re-ask on malformed output) for one
/// image. Parse failures become rejected_malformed samples; exhausted
/// retries become a transport error. EndpointRejected for 401/403/404
/// propagates since it affects every request.
GenerationResult generate_one(const ImageRecord& record, const PromptTemplate& prompt,
                              modelio::ModelClient& teacher, const DatasetFamily& family,
                              const modelio::EncodePolicy& policy = {});

struct LoopOptions {
  std::filesystem::path checkpoint;
  modelio::EncodePolicy encode;
  /// 0 means the endpoint's max_concurrent_requests.
  std::size_t parallelism = 0;
  /// Simulated hard stop: after this many checkpoint appends in the current
  /// session, in-flight results are dropped and Interrupted is thrown.
  std::optional<std::size_t> abort_after_records;
  /// Cooperative stop: in-flight work is drained and checkpointed, then
  /// Interrupted is thrown.
  std::function<bool()> should_stop;
};

struct QuotaLoopResult {
  std::vector<DistillationSample> retained;
  YieldStats stats;
};

/// Quota-driven generation and filtering for one dataset. Classes are visited
/// round-robin; images within a class in pool order. A class is never over
/// collected: at most quota - retained requests are in flight for it.
/// Resumes from the checkpoint without re-sending completed image_ids.
QuotaLoopResult run_quota_loop(const Manifest& pool, const QuotaPlan& plan,
                               const PromptTemplate& prompt, modelio::ModelClient& teacher,
                               const DatasetFamily& family, const LoopOptions& options);

/// Loads a checkpoint; unparseable (truncated) lines are skipped and later
/// records win per image_id.
std::map<std::string, DistillationSample> load_checkpoint(const std::filesystem::path& path);

struct CorpusEntry {
  ImageRecord record;
  StructuredCaption caption;
};

std::vector<CorpusEntry> to_corpus(const std::vector<DistillationSample>& retained);
nlohmann::json to_json(const CorpusEntry& entry);
CorpusEntry corpus_entry_from_json(const nlohmann::json& j);
void write_corpus(const std::filesystem::path& path, const std::vector<CorpusEntry>& corpus);
std::vector<CorpusEntry> read_corpus(const std::filesystem::path& path);

/// kFailed covers transport failures and undecodable images.
enum class PredictionStatus { kOk, kMalformed, kFailed };

std::string_view to_string(PredictionStatus status);

struct PredictionEntry {
  ImageRecord record;
  PredictionStatus status = PredictionStatus::kOk;
  std::optional<StructuredCaption> caption;
  std::string raw_response;
  std::string error;
};

nlohmann::json to_json(const PredictionEntry& entry);
PredictionEntry prediction_entry_from_json(const nlohmann::json& j);

struct PredictionSet {
  std::string model;
  /// Sorted by image_id.
  std::vector<PredictionEntry> entries;

  std::size_t count(PredictionStatus status) const;
};

void write_predictions(const std::filesystem::path& path, const PredictionSet& predictions);
PredictionSet read_predictions(const std::filesystem::path& path);

/// One generation per record, no filtering and no re-ask. Malformed outputs
/// and transport failures are recorded and the run continues. Checkpointed
/// ok/malformed entries are not re-sent on resume.
PredictionSet run_inference(const Manifest& manifest,
                            const std::map<DatasetId, PromptTemplate>& prompts,
                            modelio::ModelClient& model, const std::vector<DatasetFamily>& families,
                            const LoopOptions& options);

}  // namespace medcap::distill
