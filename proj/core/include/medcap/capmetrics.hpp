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
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcap/datamodel.hpp"
#include "medcap/modelio/client.hpp"

namespace medcap::capmetrics {

/// Judge sub-tasks. Each has a fixed system prompt; inputs are embedded in
/// the user prompt as single-line JSON values after a marker line.
enum class JudgeTask { kDecompose, kVerify, kQuestions, kClassifyClaims };

std::string_view judge_system_prompt(JudgeTask task);

inline constexpr std::string_view kMarkerText = "TEXT:";
inline constexpr std::string_view kMarkerContext = "CONTEXT:";
inline constexpr std::string_view kMarkerStatements = "STATEMENTS:";
inline constexpr std::string_view kMarkerAnswer = "ANSWER:";
inline constexpr std::string_view kMarkerCount = "COUNT:";
inline constexpr std::string_view kMarkerAnswerStatements = "ANSWER_STATEMENTS:";
inline constexpr std::string_view kMarkerReferenceStatements = "REFERENCE_STATEMENTS:";

/// Reads the JSON value on the line after `marker` in a judge user prompt.
std::optional<nlohmann::json> read_marked_value(std::string_view prompt, std::string_view marker);

/// The reference (teacher) description is both the context and the ground
/// truth; the candidate description is the answer.
struct CaptionEvalCase {
  std::string image_id;
  std::string dataset;
  std::string question;
  std::string context;
  std::string ground_truth;
  std::string answer;

  /// Throws InputError on empty fields.
  static CaptionEvalCase make(std::string image_id, std::string dataset, std::string question,
                              std::string reference, std::string answer);
};

struct CaptionScores {
  std::optional<double> faithfulness;
  std::optional<double> answer_relevancy;
  std::optional<double> answer_correctness;
  /// metric name -> reason, for metrics that could not be computed.
  std::map<std::string, std::string> unavailable;
  nlohmann::json diagnostics = nlohmann::json::object();
};

struct MetricOptions {
  int n_questions = 3;
  /// (factual, semantic); non-negative, summing to 1.
  std::pair<double, double> correctness_weights{0.75, 0.25};
  /// 0 means the judge's max_concurrent_requests.
  std::size_t parallelism = 0;

  void validate() const;
};

/// Everything a metric call sent to and received from the judge, for audit.
using Transcript = nlohmann::json;

/// Judge rewrites `answer` as a JSON array of atomic statements. One re-ask
/// on unparseable output, then MetricUnavailable(metric).
std::vector<std::string> decompose_statements(const std::string& answer,
                                              modelio::ModelClient& judge,
                                              Transcript* transcript = nullptr,
                                              const std::string& subject = {},
                                              const std::string& metric = "faithfulness");

/// Mean of the judge's 0/1 support verdicts for `statements` against `context`.
double score_faithfulness(const std::vector<std::string>& statements, const std::string& context,
                          modelio::ModelClient& judge, Transcript* transcript = nullptr,
                          const std::string& subject = {});

/// Mean cosine similarity between `question` and n_questions questions the
/// judge generates from `answer`.
double score_relevancy(const std::string& answer, const std::string& question,
                       modelio::ModelClient& judge, modelio::ModelClient& embedder,
                       int n_questions = 3, Transcript* transcript = nullptr,
                       const std::string& subject = {});

/// Claim counts from the correctness classification step.
struct ClaimCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

double claim_f1(const ClaimCounts& counts);

/// w_factual * claim F1 + w_semantic * clamp(cosine(answer, ground_truth), 0, 1).
/// A component with zero weight is not computed.
double score_correctness(const std::string& answer, const std::string& ground_truth,
                         modelio::ModelClient& judge, modelio::ModelClient& embedder,
                         std::pair<double, double> weights = {0.75, 0.25},
                         Transcript* transcript = nullptr, const std::string& subject = {});

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Runs all three metrics for one case; failures become `unavailable` entries.
CaptionScores evaluate_case(const CaptionEvalCase& c, modelio::ModelClient& judge,
                            modelio::ModelClient& embedder, const MetricOptions& options);

struct MetricSummary {
  std::optional<double> mean;
  std::size_t available = 0;
  std::size_t excluded = 0;
};

struct DatasetCaptionSummary {
  std::size_t n = 0;
  MetricSummary faithfulness;
  MetricSummary answer_relevancy;
  MetricSummary answer_correctness;
};

struct CaseResult {
  std::string image_id;
  std::string dataset;
  CaptionScores scores;
};

struct CaptionEvaluation {
  /// Sorted by image_id.
  std::vector<CaseResult> cases;
  std::map<std::string, DatasetCaptionSummary> per_dataset;
};

/// Evaluates every case with bounded parallelism over the judge. Throws
/// EmptyInput when `cases` is empty.
CaptionEvaluation evaluate_captions(const std::vector<CaptionEvalCase>& cases,
                                    modelio::ModelClient& judge, modelio::ModelClient& embedder,
                                    const MetricOptions& options = {});

/// Per-dataset means over available cases.
std::map<std::string, DatasetCaptionSummary> summarize(const std::vector<CaseResult>& cases);

nlohmann::json to_json(const CaseResult& result);
nlohmann::json to_json(const std::map<std::string, DatasetCaptionSummary>& summary);
std::map<std::string, DatasetCaptionSummary> caption_summary_from_json(const nlohmann::json& j);

}  // namespace medcap::capmetrics
