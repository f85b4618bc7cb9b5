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

#include "medcap/capmetrics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "medcap/errors.hpp"
#include "medcap/util.hpp"
#include "medcap/worker_pool.hpp"

namespace medcap::capmetrics {

using nlohmann::json;

std::string_view judge_system_prompt(JudgeTask task) {
  switch (task) {
    case JudgeTask::kDecompose:
      return "You are an evaluation judge. Break the given text into short, self-contained "
             "factual statements. Each statement must be understandable on its own, without "
             "pronouns that refer to other statements. Reply with a JSON array of strings only.";
    case JudgeTask::kVerify:
      return "You are an evaluation judge. For each statement, decide whether it can be directly "
             "inferred from the context. Reply with a JSON array of integers only, one per "
             "statement in the given order: 1 if supported by the context, 0 otherwise.";
    case JudgeTask::kQuestions:
      return "You are an evaluation judge. Write questions that the given answer would answer "
             "directly. Reply with a JSON array of strings only, containing exactly the requested "
             "number of questions.";
    case JudgeTask::kClassifyClaims:
      return "You are an evaluation judge. You receive statements from an answer and statements "
             "from a reference. Reply with a JSON object only, with two keys: \"answer\": an array "
             "with one integer per answer statement (1 if the reference supports it, 0 if not), "
             "and \"reference\": an array with one integer per reference statement (1 if the "
             "answer covers it, 0 if not).";
  }
  return {};
}

std::optional<json> read_marked_value(std::string_view prompt, std::string_view marker) {
  std::string needle = std::string(marker) + "\n";
  std::size_t pos = 0;
  for (;;) {
    pos = prompt.find(needle, pos);
    if (pos == std::string_view::npos) return std::nullopt;
    if (pos == 0 || prompt[pos - 1] == '\n') break;
    pos += needle.size();
  }
  const auto begin = pos + needle.size();
  const auto end = prompt.find('\n', begin);
  auto value = json::parse(prompt.substr(begin, end == std::string_view::npos ? end : end - begin),
                           nullptr, false);
  if (value.is_discarded()) return std::nullopt;
  return value;
}

CaptionEvalCase CaptionEvalCase::make(std::string image_id, std::string dataset,
                                      std::string question, std::string reference,
                                      std::string answer) {
  if (trim(image_id).empty() || trim(question).empty() || trim(reference).empty() ||
      trim(answer).empty()) {
    throw InputError("caption eval case '" + image_id + "' has an empty field");
  }
  CaptionEvalCase c;
  c.image_id = std::move(image_id);
  c.dataset = std::move(dataset);
  c.question = std::move(question);
  c.context = reference;
  c.ground_truth = std::move(reference);
  c.answer = std::move(answer);
  return c;
}

void MetricOptions::validate() const {
  if (n_questions < 1) throw ConfigError("n_questions must be >= 1");
  const auto [wf, ws] = correctness_weights;
  if (wf < 0.0 || ws < 0.0 || std::abs(wf + ws - 1.0) > 1e-9) {
    throw ConfigError("correctness weights must be non-negative and sum to 1");
  }
}

namespace {

std::string section(std::string_view marker, const json& value) {
  return std::string(marker) + "\n" + value.dump() + "\n\n";
}

// Sends a judge request; on a parse failure (the callback returns nullopt)
// re-asks once with a reminder, then reports the metric unavailable.
template <typename T, typename Parse>
T ask_judge(modelio::ModelClient& judge, JudgeTask task, const std::string& user_text,
            Parse parse, const std::string& metric, const std::string& purpose,
            const std::string& subject, json* raw_log) {
  modelio::ChatRequest request;
  request.system_prompt = std::string(judge_system_prompt(task));
  request.user_text = user_text;
  for (int reask = 0; reask < 2; ++reask) {
    if (reask == 1) {
      request.user_text += "\nYour previous reply could not be parsed. Reply with the JSON only.";
    }
    modelio::ChatResponse response;
    try {
      response = judge.chat_complete(request, {purpose, subject, reask});
    } catch (const EndpointError& e) {
      throw MetricUnavailable(metric, e.what());
    }
    if (raw_log) raw_log->push_back(response.text);
    if (std::optional<T> parsed = parse(response.text)) return std::move(*parsed);
  }
  throw MetricUnavailable(metric, "judge output unparseable after re-ask (" + purpose + ")");
}

std::optional<json> array_reply(const std::string& text, const char* wrapper_key) {
  auto object = find_json(text, '{');
  auto array = find_json(text, '[');
  if (object && object->contains(wrapper_key) && (*object)[wrapper_key].is_array()) {
    // Prefer the wrapper when the object appears before any bare array.
    if (!array || text.find('{') < text.find('[')) return (*object)[wrapper_key];
  }
  return array;
}

std::optional<std::vector<std::string>> string_list(const std::string& text, const char* key) {
  auto arr = array_reply(text, key);
  if (!arr) return std::nullopt;
  std::vector<std::string> out;
  for (const auto& item : *arr) {
    if (!item.is_string()) return std::nullopt;
    auto s = trim(item.get<std::string>());
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

std::optional<int> as_verdict(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
  if (v.is_number_integer()) {
    const auto x = v.get<long long>();
    if (x == 0 || x == 1) return static_cast<int>(x);
    return std::nullopt;
  }
  if (v.is_object() && v.contains("verdict")) return as_verdict(v["verdict"]);
  return std::nullopt;
}

std::optional<std::vector<int>> verdict_list(const json& arr, std::size_t expected) {
  if (!arr.is_array() || arr.size() != expected) return std::nullopt;
  std::vector<int> out;
  for (const auto& v : arr) {
    auto verdict = as_verdict(v);
    if (!verdict) return std::nullopt;
    out.push_back(*verdict);
  }
  return out;
}

json& slot(Transcript* t, const char* key) {
  static thread_local json scratch;
  if (t == nullptr) {
    scratch = json::array();
    return scratch;
  }
  if (!t->contains(key)) (*t)[key] = json::array();
  return (*t)[key];
}

double semantic_similarity(const std::string& answer, const std::string& ground_truth,
                           modelio::ModelClient& embedder, const std::string& subject) {
  std::vector<std::vector<double>> vectors;
  try {
    vectors = embedder.embed({answer, ground_truth}, {"answer_correctness", subject, 0});
  } catch (const EndpointError& e) {
    throw MetricUnavailable("answer_correctness", e.what());
  }
  return std::clamp(cosine_similarity(vectors[0], vectors[1]), 0.0, 1.0);
}

double correctness_from_statements(const std::vector<std::string>& answer_statements,
                                   const std::string& answer, const std::string& ground_truth,
                                   modelio::ModelClient& judge, modelio::ModelClient& embedder,
                                   std::pair<double, double> weights, Transcript* transcript,
                                   const std::string& subject) {
  const auto [w_factual, w_semantic] = weights;
  double factual = 0.0;
  if (w_factual > 0.0) {
    auto reference_statements = decompose_statements(ground_truth, judge, nullptr, subject,
                                                     "answer_correctness");
    const std::string user = section(kMarkerAnswerStatements, answer_statements) +
                             section(kMarkerReferenceStatements, reference_statements) +
                             "Classify every statement as described.";
    auto verdicts = ask_judge<std::pair<std::vector<int>, std::vector<int>>>(
        judge, JudgeTask::kClassifyClaims, user,
        [&](const std::string& text) -> std::optional<std::pair<std::vector<int>, std::vector<int>>> {
          auto obj = find_json(text, '{');
          if (!obj || !obj->contains("answer") || !obj->contains("reference")) return std::nullopt;
          auto a = verdict_list((*obj)["answer"], answer_statements.size());
          auto r = verdict_list((*obj)["reference"], reference_statements.size());
          if (!a || !r) return std::nullopt;
          return std::pair{*a, *r};
        },
        "answer_correctness", "correctness_claims", subject, &slot(transcript, "judge_replies"));
    ClaimCounts counts;
    for (int v : verdicts.first) (v == 1 ? counts.tp : counts.fp)++;
    for (int v : verdicts.second) {
      if (v == 0) ++counts.fn;
    }
    factual = claim_f1(counts);
    if (transcript) {
      (*transcript)["answer_statements"] = answer_statements;
      (*transcript)["reference_statements"] = reference_statements;
      (*transcript)["answer_verdicts"] = verdicts.first;
      (*transcript)["reference_verdicts"] = verdicts.second;
      (*transcript)["tp"] = counts.tp;
      (*transcript)["fp"] = counts.fp;
      (*transcript)["fn"] = counts.fn;
      (*transcript)["factual"] = factual;
    }
  }
  double semantic = 0.0;
  if (w_semantic > 0.0) {
    semantic = semantic_similarity(answer, ground_truth, embedder, subject);
    if (transcript) (*transcript)["semantic"] = semantic;
  }
  return std::clamp(w_factual * factual + w_semantic * semantic, 0.0, 1.0);
}

}  // namespace

std::vector<std::string> decompose_statements(const std::string& answer,
                                              modelio::ModelClient& judge, Transcript* transcript,
                                              const std::string& subject,
                                              const std::string& metric) {
  if (trim(answer).empty()) throw InputError("decompose_statements: empty answer");
  const std::string user = section(kMarkerText, answer) + "List the atomic statements.";
  return ask_judge<std::vector<std::string>>(
      judge, JudgeTask::kDecompose, user,
      [](const std::string& text) -> std::optional<std::vector<std::string>> {
        auto list = string_list(text, "statements");
        if (!list || list->empty()) return std::nullopt;
        return list;
      },
      metric, "decompose", subject, &slot(transcript, "judge_replies"));
}

double score_faithfulness(const std::vector<std::string>& statements, const std::string& context,
                          modelio::ModelClient& judge, Transcript* transcript,
                          const std::string& subject) {
  if (statements.empty()) throw MetricUnavailable("faithfulness", "no statements to verify");
  const std::string user = section(kMarkerContext, context) +
                           section(kMarkerStatements, statements) +
                           "Give one verdict per statement.";
  auto verdicts = ask_judge<std::vector<int>>(
      judge, JudgeTask::kVerify, user,
      [&](const std::string& text) -> std::optional<std::vector<int>> {
        auto arr = array_reply(text, "verdicts");
        if (!arr) return std::nullopt;
        return verdict_list(*arr, statements.size());
      },
      "faithfulness", "faithfulness_verdicts", subject, &slot(transcript, "judge_replies"));
  const auto supported = std::count(verdicts.begin(), verdicts.end(), 1);
  if (transcript) {
    (*transcript)["statements"] = statements;
    (*transcript)["verdicts"] = verdicts;
  }
  return static_cast<double>(supported) / static_cast<double>(verdicts.size());
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw InputError("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double score_relevancy(const std::string& answer, const std::string& question,
                       modelio::ModelClient& judge, modelio::ModelClient& embedder,
                       int n_questions, Transcript* transcript, const std::string& subject) {
  if (trim(answer).empty()) throw InputError("score_relevancy: empty answer");
  if (n_questions < 1) throw InputError("score_relevancy: n_questions must be >= 1");
  const auto n = static_cast<std::size_t>(n_questions);
  const std::string user = section(kMarkerAnswer, answer) + section(kMarkerCount, n_questions) +
                           "Write the questions.";
  auto questions = ask_judge<std::vector<std::string>>(
      judge, JudgeTask::kQuestions, user,
      [&](const std::string& text) -> std::optional<std::vector<std::string>> {
        auto list = string_list(text, "questions");
        if (!list || list->size() < n) return std::nullopt;
        list->resize(n);
        return list;
      },
      "answer_relevancy", "relevancy_questions", subject, &slot(transcript, "judge_replies"));

  std::vector<std::string> texts{question};
  texts.insert(texts.end(), questions.begin(), questions.end());
  std::vector<std::vector<double>> vectors;
  try {
    vectors = embedder.embed(texts, {"answer_relevancy", subject, 0});
  } catch (const EndpointError& e) {
    throw MetricUnavailable("answer_relevancy", e.what());
  }
  std::vector<double> cosines;
  double sum = 0.0;
  for (std::size_t i = 1; i < vectors.size(); ++i) {
    cosines.push_back(cosine_similarity(vectors[i], vectors[0]));
    sum += cosines.back();
  }
  if (transcript) {
    (*transcript)["questions"] = questions;
    (*transcript)["cosines"] = cosines;
  }
  return sum / static_cast<double>(cosines.size());
}

double claim_f1(const ClaimCounts& c) {
  const auto denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 0.0;
  return static_cast<double>(2 * c.tp) / static_cast<double>(denom);
}

double score_correctness(const std::string& answer, const std::string& ground_truth,
                         modelio::ModelClient& judge, modelio::ModelClient& embedder,
                         std::pair<double, double> weights, Transcript* transcript,
                         const std::string& subject) {
  if (trim(answer).empty() || trim(ground_truth).empty()) {
    throw InputError("score_correctness: empty text");
  }
  MetricOptions{1, weights, 0}.validate();
  std::vector<std::string> answer_statements;
  if (weights.first > 0.0) {
    answer_statements =
        decompose_statements(answer, judge, transcript, subject, "answer_correctness");
  }
  return correctness_from_statements(answer_statements, answer, ground_truth, judge, embedder,
                                     weights, transcript, subject);
}

CaptionScores evaluate_case(const CaptionEvalCase& c, modelio::ModelClient& judge,
                            modelio::ModelClient& embedder, const MetricOptions& options) {
  CaptionScores scores;
  json faith = json::object();
  json relevancy = json::object();
  json correctness = json::object();

  std::optional<std::vector<std::string>> statements;
  try {
    statements = decompose_statements(c.answer, judge, &faith, c.image_id);
    scores.faithfulness = score_faithfulness(*statements, c.context, judge, &faith, c.image_id);
  } catch (const Error& e) {
    scores.unavailable["faithfulness"] = e.what();
  }
  try {
    scores.answer_relevancy = score_relevancy(c.answer, c.question, judge, embedder,
                                              options.n_questions, &relevancy, c.image_id);
  } catch (const Error& e) {
    scores.unavailable["answer_relevancy"] = e.what();
  }
  try {
    if (statements || options.correctness_weights.first == 0.0) {
      scores.answer_correctness = correctness_from_statements(
          statements.value_or(std::vector<std::string>{}), c.answer, c.ground_truth, judge,
          embedder, options.correctness_weights, &correctness, c.image_id);
    } else {
      scores.answer_correctness =
          score_correctness(c.answer, c.ground_truth, judge, embedder,
                            options.correctness_weights, &correctness, c.image_id);
    }
  } catch (const Error& e) {
    scores.unavailable["answer_correctness"] = e.what();
  }
  scores.diagnostics = {{"faithfulness", std::move(faith)},
                        {"answer_relevancy", std::move(relevancy)},
                        {"answer_correctness", std::move(correctness)}};
  return scores;
}

std::map<std::string, DatasetCaptionSummary> summarize(const std::vector<CaseResult>& cases) {
  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    std::size_t excluded = 0;
    void add(const std::optional<double>& v) {
      if (v) {
        sum += *v;
        ++n;
      } else {
        ++excluded;
      }
    }
    MetricSummary finish() const {
      MetricSummary m;
      m.available = n;
      m.excluded = excluded;
      if (n > 0) m.mean = sum / static_cast<double>(n);
      return m;
    }
  };
  std::map<std::string, std::array<Acc, 3>> acc;
  std::map<std::string, std::size_t> counts;
  for (const auto& c : cases) {
    auto& a = acc[c.dataset];
    a[0].add(c.scores.faithfulness);
    a[1].add(c.scores.answer_relevancy);
    a[2].add(c.scores.answer_correctness);
    ++counts[c.dataset];
  }
  std::map<std::string, DatasetCaptionSummary> out;
  for (const auto& [dataset, a] : acc) {
    out[dataset] = {counts[dataset], a[0].finish(), a[1].finish(), a[2].finish()};
  }
  return out;
}

CaptionEvaluation evaluate_captions(const std::vector<CaptionEvalCase>& cases,
                                    modelio::ModelClient& judge, modelio::ModelClient& embedder,
                                    const MetricOptions& options) {
  options.validate();
  if (cases.empty()) throw EmptyInput("no caption cases to evaluate");
  CaptionEvaluation evaluation;
  evaluation.cases.resize(cases.size());
  const std::size_t parallelism =
      options.parallelism > 0 ? options.parallelism
                              : static_cast<std::size_t>(judge.config().max_concurrent_requests);
  {
    WorkerPool workers(std::min(parallelism, cases.size()));
    for (std::size_t i = 0; i < cases.size(); ++i) {
      workers.submit([&, i] {
        auto& out = evaluation.cases[i];
        out.image_id = cases[i].image_id;
        out.dataset = cases[i].dataset;
        try {
          out.scores = evaluate_case(cases[i], judge, embedder, options);
        } catch (const std::exception& e) {
          for (const char* m : {"faithfulness", "answer_relevancy", "answer_correctness"}) {
            out.scores.unavailable[m] = e.what();
          }
        }
      });
    }
  }
  std::sort(evaluation.cases.begin(), evaluation.cases.end(),
            [](const CaseResult& a, const CaseResult& b) { return a.image_id < b.image_id; });
  evaluation.per_dataset = summarize(evaluation.cases);
  for (const auto& [dataset, s] : evaluation.per_dataset) {
    spdlog::info("caption eval {}: n={} excluded faithfulness={} relevancy={} correctness={}",
                 dataset, s.n, s.faithfulness.excluded, s.answer_relevancy.excluded,
                 s.answer_correctness.excluded);
  }
  return evaluation;
}

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> number_or_null(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json metric_summary_json(const MetricSummary& m) {
  return {{"mean", optional_number(m.mean)}, {"available", m.available}, {"excluded", m.excluded}};
}

MetricSummary metric_summary_from_json(const json& j) {
  return {number_or_null(j.at("mean")), j.at("available").get<std::size_t>(),
          j.at("excluded").get<std::size_t>()};
}

}  // namespace

json to_json(const CaseResult& r) {
  return {{"image_id", r.image_id},
          {"dataset", r.dataset},
          {"faithfulness", optional_number(r.scores.faithfulness)},
          {"answer_relevancy", optional_number(r.scores.answer_relevancy)},
          {"answer_correctness", optional_number(r.scores.answer_correctness)},
          {"unavailable", r.scores.unavailable},
          {"diagnostics", r.scores.diagnostics}};
}

json to_json(const std::map<std::string, DatasetCaptionSummary>& summary) {
  json out = json::object();
  for (const auto& [dataset, s] : summary) {
    out[dataset] = {{"n", s.n},
                    {"faithfulness", metric_summary_json(s.faithfulness)},
                    {"answer_relevancy", metric_summary_json(s.answer_relevancy)},
                    {"answer_correctness", metric_summary_json(s.answer_correctness)}};
  }
  return out;
}

std::map<std::string, DatasetCaptionSummary> caption_summary_from_json(const json& j) {
  try {
    std::map<std::string, DatasetCaptionSummary> out;
    for (const auto& [dataset, s] : j.items()) {
      out[dataset] = {s.at("n").get<std::size_t>(), metric_summary_from_json(s.at("faithfulness")),
                      metric_summary_from_json(s.at("answer_relevancy")),
                      metric_summary_from_json(s.at("answer_correctness"))};
    }
    return out;
  } catch (const json::exception& e) {
    throw InputError(std::string("bad caption summary: ") + e.what());
  }
}

}  // namespace medcap::capmetrics
