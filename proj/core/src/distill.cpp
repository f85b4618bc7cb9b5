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

#include "medcap/distill.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <exception>
#include <nlohmann/json.hpp>

#include "medcap/errors.hpp"
#include "medcap/util.hpp"
#include "medcap/worker_pool.hpp"

namespace medcap::distill {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Prompts

PromptTemplate PromptTemplate::make(std::string system_prompt, std::string user_prompt,
                                    std::vector<std::string> classes) {
  for (auto header : kSectionHeaders) {
    if (system_prompt.find(header) == std::string::npos) {
      throw ConfigError("system prompt does not name section " + std::string(header));
    }
  }
  if (system_prompt.find(kGuardrailClause) == std::string::npos) {
    throw ConfigError("system prompt is missing the guardrail clause");
  }
  if (trim(user_prompt).empty()) throw ConfigError("empty user prompt");
  return PromptTemplate{std::move(system_prompt), std::move(user_prompt), std::move(classes)};
}

std::string PromptTemplate::render_system() const {
  std::string list;
  for (const auto& c : class_list_injection) {
    if (!list.empty()) list += ", ";
    list += '"' + c + '"';
  }
  std::string out = system_prompt;
  if (auto pos = out.find(kClassesPlaceholder); pos != std::string::npos) {
    out.replace(pos, kClassesPlaceholder.size(), list);
  } else if (!list.empty()) {
    out += "\nAllowed prediction labels: " + list;
  }
  return out;
}

std::string default_system_prompt() {
  return "You are a specialist clinician and image interpreter. Examine the medical image "
         "provided by the user and reply with one JSON object and nothing else.\n"
         "The object has exactly two keys:\n"
         "- \"prediction\": exactly one class label, copied verbatim from this list: {classes}\n"
         "- \"description\": an object with four mandatory, non-empty string fields:\n"
         "  \"image_type\" (IMAGE TYPE: the imaging modality),\n"
         "  \"anatomical_region\" (ANATOMICAL REGION: the body part shown),\n"
         "  \"key_findings\" (KEY FINDINGS: objective observations of any pathology),\n"
         "  \"clinical_significance\" (CLINICAL SIGNIFICANCE: the diagnostic implications).\n" +
         std::string(kGuardrailClause) +
         " Do not recommend treatment, follow-up or further investigations.";
}

std::string default_user_prompt() {
  return "Interpret this medical image and describe its findings in the required JSON format.";
}

PromptTemplate default_template(const DatasetFamily& family) {
  return PromptTemplate::make(default_system_prompt(), default_user_prompt(),
                              family.canonical_names());
}

// ---------------------------------------------------------------------------
// Quotas

void QuotaPlan::validate(const DatasetFamily& family) const {
  if (family.id != dataset) throw ConfigError("quota plan dataset does not match family");
  if (per_class_quota.empty()) throw ConfigError("quota plan has no classes");
  int max_quota = 0;
  for (const auto& [label, quota] : per_class_quota) {
    if (!family.contains(label)) {
      throw ConfigError("quota class '" + label + "' is not in the " +
                        std::string(to_string(dataset)) + " vocabulary");
    }
    if (quota <= 0) throw ConfigError("quota for '" + label + "' must be positive");
    max_quota = std::max(max_quota, quota);
  }
  if (attempt_budget_per_class < max_quota) {
    throw ConfigError("attempt_budget_per_class must be >= every class quota");
  }
}

int QuotaPlan::quota_for(std::string_view label) const {
  for (const auto& [name, quota] : per_class_quota) {
    if (name == label) return quota;
  }
  return 0;
}

QuotaPlan even_quota_plan(const DatasetFamily& family, int total, int budget_multiplier) {
  QuotaPlan plan;
  plan.dataset = family.id;
  const int k = static_cast<int>(family.class_vocabulary.size());
  int max_quota = 0;
  for (int i = 0; i < k; ++i) {
    const int quota = total / k + (i < total % k ? 1 : 0);
    plan.per_class_quota.emplace_back(family.class_vocabulary[static_cast<std::size_t>(i)].canonical,
                                      quota);
    max_quota = std::max(max_quota, quota);
  }
  plan.attempt_budget_per_class = budget_multiplier * max_quota;
  return plan;
}

QuotaPlan uniform_quota_plan(const DatasetFamily& family, int per_class, int budget_multiplier) {
  return even_quota_plan(family, per_class * static_cast<int>(family.class_vocabulary.size()),
                         budget_multiplier);
}

QuotaPlan default_quota_plan(const DatasetFamily& family) {
  switch (family.id) {
    case DatasetId::kFundus: return even_quota_plan(family, 500);
    case DatasetId::kDermatology: return even_quota_plan(family, 676);
    case DatasetId::kChestXray: return uniform_quota_plan(family, 50);
  }
  throw ConfigError("no default quota for dataset");
}

bool YieldStats::is_excluded(std::string_view label) const {
  return std::any_of(excluded_classes.begin(), excluded_classes.end(),
                     [&](const ExcludedClass& e) { return e.label == label; });
}

json to_json(const YieldStats& stats) {
  json per_class = json::object();
  for (const auto& [label, y] : stats.per_class) {
    per_class[label] = {{"attempted", y.attempted},
                        {"retained", y.retained},
                        {"rejected_mismatch", y.rejected_mismatch},
                        {"rejected_malformed", y.rejected_malformed},
                        {"transport_failures", y.transport_failures},
                        {"skipped_undecodable", y.skipped_undecodable}};
  }
  json excluded = json::array();
  for (const auto& e : stats.excluded_classes) {
    excluded.push_back({{"label", e.label}, {"reason", e.reason}});
  }
  return {{"per_class", per_class}, {"excluded_classes", excluded}};
}

// ---------------------------------------------------------------------------
// Generation

namespace {

bool is_systemic_rejection(const EndpointRejected& e) {
  return e.status() == 401 || e.status() == 403 || e.status() == 404;
}

}  // namespace

GenerationResult generate_one(const ImageRecord& record, const PromptTemplate& prompt,
                              modelio::ModelClient& teacher, const DatasetFamily& family,
                              const modelio::EncodePolicy& policy) {
  GenerationResult result;
  modelio::ChatRequest request;
  try {
    request.image = modelio::encode_image(record, policy);
  } catch (const ImageDecodeError& e) {
    spdlog::warn("skipping {}: {}", record.image_id, e.what());
    result.undecodable = true;
    return result;
  }
  request.system_prompt = prompt.render_system();
  request.user_text = prompt.user_prompt;
  request.response_format_json = true;

  for (int reask = 0; reask < 2; ++reask) {
    if (reask == 1) request.user_text += "\n" + std::string(kReaskNudge);
    modelio::ChatResponse response;
    try {
      response = teacher.chat_complete(request, {"distill", record.image_id, reask});
    } catch (const EndpointRejected& e) {
      if (is_systemic_rejection(e)) throw;
      result.transport_error = e.what();
      return result;
    } catch (const EndpointExhausted& e) {
      result.transport_error = e.what();
      return result;
    }
    DistillationSample sample;
    sample.record = record;
    sample.raw_response = response.text;
    sample.attempt_index = static_cast<std::uint32_t>(reask);
    try {
      sample.teacher_output = parse_structured_caption(response.text, family.normalization);
    } catch (const ParseFailure&) {
      if (reask == 0) continue;
    }
    sample.verdict = derive_verdict(record, sample.teacher_output);
    result.sample = std::move(sample);
    return result;
  }
  return result;
}

std::map<std::string, DistillationSample> load_checkpoint(const std::filesystem::path& path) {
  std::map<std::string, DistillationSample> out;
  if (path.empty() || !std::filesystem::exists(path)) return out;
  const auto read = read_jsonl(path, true);
  if (read.skipped_lines > 0) {
    spdlog::warn("checkpoint {}: skipped {} unreadable line(s)", path.string(), read.skipped_lines);
  }
  for (const auto& j : read.records) {
    try {
      auto sample = distillation_sample_from_json(j);
      auto id = sample.record.image_id;
      out.insert_or_assign(std::move(id), std::move(sample));
    } catch (const InputError& e) {
      spdlog::warn("checkpoint {}: {}", path.string(), e.what());
    }
  }
  return out;
}

namespace {

struct ClassState {
  std::string label;
  int quota = 0;
  std::vector<const ImageRecord*> queue;
  std::size_t cursor = 0;
  int dispatched = 0;
  int retained = 0;
  int in_flight = 0;
};

struct Completion {
  std::size_t cls = 0;
  const ImageRecord* record = nullptr;
  GenerationResult result;
  std::exception_ptr error;
};

}  // namespace

QuotaLoopResult run_quota_loop(const Manifest& pool, const QuotaPlan& plan,
                               const PromptTemplate& prompt, modelio::ModelClient& teacher,
                               const DatasetFamily& family, const LoopOptions& options) {
  plan.validate(family);
  auto done = load_checkpoint(options.checkpoint);
  std::unique_ptr<JsonlWriter> writer;
  if (!options.checkpoint.empty()) writer = std::make_unique<JsonlWriter>(options.checkpoint);

  std::vector<ClassState> states;
  for (const auto& [label, quota] : plan.per_class_quota) {
    ClassState s;
    s.label = label;
    s.quota = quota;
    states.push_back(std::move(s));
  }
  for (const auto& record : pool) {
    if (record.dataset != plan.dataset) continue;
    for (auto& s : states) {
      if (s.label == record.ground_truth.canonical) {
        s.queue.push_back(&record);
        break;
      }
    }
  }

  QuotaLoopResult result;
  auto& stats = result.stats;
  for (const auto& s : states) stats.per_class[s.label];
  std::map<std::string, DistillationSample> kept;

  auto apply = [&](ClassState& s, DistillationSample sample) {
    auto& y = stats.per_class[s.label];
    ++y.attempted;
    switch (sample.verdict) {
      case Verdict::kRetained:
        ++y.retained;
        ++s.retained;
        kept.insert_or_assign(sample.record.image_id, std::move(sample));
        break;
      case Verdict::kRejectedMismatch: ++y.rejected_mismatch; break;
      case Verdict::kRejectedMalformed: ++y.rejected_malformed; break;
    }
  };

  const std::size_t parallelism =
      options.parallelism > 0 ? options.parallelism
                              : static_cast<std::size_t>(teacher.config().max_concurrent_requests);
  const auto dispatchable = [&](const ClassState& s) {
    return s.retained + s.in_flight < s.quota && s.dispatched < plan.attempt_budget_per_class &&
           s.cursor < s.queue.size();
  };

  CompletionQueue<Completion> completions;
  std::exception_ptr fatal;
  bool aborted = false;
  bool stopping = false;
  std::size_t appended = 0;
  std::size_t in_flight_total = 0;
  {
    WorkerPool workers(parallelism);
    std::size_t rotation = 0;
    for (;;) {
      bool progress = !aborted && !stopping && !fatal;
      while (progress && in_flight_total < parallelism) {
        progress = false;
        for (std::size_t k = 0; k < states.size() && in_flight_total < parallelism; ++k) {
          const std::size_t c = (rotation + k) % states.size();
          auto& s = states[c];
          if (!dispatchable(s)) continue;
          const ImageRecord* record = s.queue[s.cursor++];
          ++s.dispatched;
          progress = true;
          if (auto it = done.find(record->image_id); it != done.end()) {
            DistillationSample sample = it->second;
            sample.record = *record;
            sample.verdict = derive_verdict(*record, sample.teacher_output);
            apply(s, std::move(sample));
            continue;
          }
          ++s.in_flight;
          ++in_flight_total;
          workers.submit([&, c, record] {
            Completion completion{c, record, {}, nullptr};
            try {
              completion.result = generate_one(*record, prompt, teacher, family, options.encode);
            } catch (...) {
              completion.error = std::current_exception();
            }
            completions.push(std::move(completion));
          });
        }
        rotation = states.empty() ? 0 : (rotation + 1) % states.size();
      }
      if (in_flight_total == 0) break;

      auto completion = completions.pop();
      --in_flight_total;
      auto& s = states[completion.cls];
      --s.in_flight;
      if (aborted) continue;
      if (completion.error) {
        if (!fatal) fatal = completion.error;
        continue;
      }
      auto& r = completion.result;
      if (r.undecodable) {
        ++stats.per_class[s.label].skipped_undecodable;
        --s.dispatched;
      } else if (!r.sample) {
        auto& y = stats.per_class[s.label];
        ++y.attempted;
        ++y.transport_failures;
        spdlog::warn("teacher failed for {}: {}", completion.record->image_id, r.transport_error);
      } else {
        if (writer) writer->append(to_json(*r.sample));
        apply(s, std::move(*r.sample));
        ++appended;
        if (options.abort_after_records && appended >= *options.abort_after_records) {
          aborted = true;
        }
      }
      if (options.should_stop && options.should_stop()) stopping = true;
    }
  }
  if (fatal) std::rethrow_exception(fatal);
  if (aborted || stopping) {
    throw Interrupted("quota loop for " + std::string(to_string(plan.dataset)) +
                      " interrupted after " + std::to_string(appended) + " record(s)");
  }

  for (const auto& s : states) {
    if (s.retained >= s.quota) continue;
    const bool budget_spent = s.dispatched >= plan.attempt_budget_per_class;
    stats.excluded_classes.push_back({s.label, budget_spent ? "budget_exhausted" : "pool_exhausted"});
    spdlog::info("{}: class '{}' excluded ({} of {} retained, {})", to_string(plan.dataset),
                 s.label, s.retained, s.quota, stats.excluded_classes.back().reason);
  }
  for (auto& [id, sample] : kept) {
    if (!stats.is_excluded(sample.record.ground_truth.canonical)) {
      result.retained.push_back(std::move(sample));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Retained corpus

std::vector<CorpusEntry> to_corpus(const std::vector<DistillationSample>& retained) {
  std::vector<CorpusEntry> corpus;
  corpus.reserve(retained.size());
  for (const auto& s : retained) {
    if (s.verdict != Verdict::kRetained || !s.teacher_output) {
      throw InputError("sample " + s.record.image_id + " is not a retained sample");
    }
    corpus.push_back({s.record, *s.teacher_output});
  }
  std::sort(corpus.begin(), corpus.end(), [](const CorpusEntry& a, const CorpusEntry& b) {
    return a.record.image_id < b.record.image_id;
  });
  return corpus;
}

namespace {

json caption_with_canonical(const StructuredCaption& c) {
  auto j = caption_to_json(c);
  j["prediction_canonical"] = c.prediction.canonical;
  return j;
}

StructuredCaption caption_from_stored(const json& j) {
  StructuredCaption c;
  c.prediction.raw = j.at("prediction").get<std::string>();
  c.prediction.canonical = j.value("prediction_canonical", fold_label(c.prediction.raw));
  const auto& d = j.at("description");
  c.description = {d.at("image_type").get<std::string>(), d.at("anatomical_region").get<std::string>(),
                   d.at("key_findings").get<std::string>(),
                   d.at("clinical_significance").get<std::string>()};
  return c;
}

}  // namespace

json to_json(const CorpusEntry& e) {
  auto j = medcap::to_json(e.record);
  j["caption"] = caption_with_canonical(e.caption);
  return j;
}

CorpusEntry corpus_entry_from_json(const json& j) {
  try {
    return {image_record_from_json(j), caption_from_stored(j.at("caption"))};
  } catch (const json::exception& e) {
    throw InputError(std::string("bad corpus entry: ") + e.what());
  }
}

void write_corpus(const std::filesystem::path& path, const std::vector<CorpusEntry>& corpus) {
  std::vector<json> lines;
  lines.reserve(corpus.size());
  for (const auto& e : corpus) lines.push_back(to_json(e));
  write_jsonl(path, lines);
}

std::vector<CorpusEntry> read_corpus(const std::filesystem::path& path) {
  std::vector<CorpusEntry> corpus;
  for (const auto& j : read_jsonl(path).records) corpus.push_back(corpus_entry_from_json(j));
  return corpus;
}

// ---------------------------------------------------------------------------
// Candidate inference

std::string_view to_string(PredictionStatus status) {
  switch (status) {
    case PredictionStatus::kOk: return "ok";
    case PredictionStatus::kMalformed: return "malformed";
    case PredictionStatus::kFailed: return "failed";
  }
  return "unknown";
}

namespace {

PredictionStatus prediction_status_from_string(std::string_view s) {
  if (s == "ok") return PredictionStatus::kOk;
  if (s == "malformed") return PredictionStatus::kMalformed;
  if (s == "failed") return PredictionStatus::kFailed;
  throw InputError("unknown prediction status '" + std::string(s) + "'");
}

}  // namespace

json to_json(const PredictionEntry& e) {
  json j{{"record", medcap::to_json(e.record)},
         {"status", to_string(e.status)},
         {"raw_response", e.raw_response},
         {"error", e.error}};
  j["caption"] = e.caption ? caption_with_canonical(*e.caption) : json(nullptr);
  return j;
}

PredictionEntry prediction_entry_from_json(const json& j) {
  try {
    PredictionEntry e;
    e.record = image_record_from_json(j.at("record"));
    e.status = prediction_status_from_string(j.at("status").get<std::string>());
    e.raw_response = j.value("raw_response", "");
    e.error = j.value("error", "");
    if (j.contains("caption") && !j["caption"].is_null()) e.caption = caption_from_stored(j["caption"]);
    return e;
  } catch (const json::exception& ex) {
    throw InputError(std::string("bad prediction entry: ") + ex.what());
  }
}

std::size_t PredictionSet::count(PredictionStatus status) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [&](const PredictionEntry& e) { return e.status == status; }));
}

void write_predictions(const std::filesystem::path& path, const PredictionSet& predictions) {
  std::vector<json> lines;
  lines.reserve(predictions.entries.size() + 1);
  lines.push_back({{"model", predictions.model}, {"entries", predictions.entries.size()}});
  for (const auto& e : predictions.entries) lines.push_back(to_json(e));
  write_jsonl(path, lines);
}

PredictionSet read_predictions(const std::filesystem::path& path) {
  const auto records = read_jsonl(path).records;
  if (records.empty() || !records.front().contains("model")) {
    throw InputError(path.string() + ": missing prediction header line");
  }
  PredictionSet set;
  set.model = records.front()["model"].get<std::string>();
  for (std::size_t i = 1; i < records.size(); ++i) {
    set.entries.push_back(prediction_entry_from_json(records[i]));
  }
  return set;
}

PredictionSet run_inference(const Manifest& manifest,
                            const std::map<DatasetId, PromptTemplate>& prompts,
                            modelio::ModelClient& model, const std::vector<DatasetFamily>& families,
                            const LoopOptions& options) {
  PredictionSet set;
  set.model = model.config().name;

  std::map<std::string, PredictionEntry> results;
  if (!options.checkpoint.empty() && std::filesystem::exists(options.checkpoint)) {
    for (const auto& j : read_jsonl(options.checkpoint, true).records) {
      try {
        auto e = prediction_entry_from_json(j);
        if (e.status != PredictionStatus::kFailed) results.insert_or_assign(e.record.image_id, e);
      } catch (const InputError& ex) {
        spdlog::warn("checkpoint {}: {}", options.checkpoint.string(), ex.what());
      }
    }
  }
  std::unique_ptr<JsonlWriter> writer;
  if (!options.checkpoint.empty()) writer = std::make_unique<JsonlWriter>(options.checkpoint);

  auto family_for = [&](DatasetId id) -> const DatasetFamily& {
    for (const auto& f : families) {
      if (f.id == id) return f;
    }
    throw ConfigError("no dataset family for " + std::string(to_string(id)));
  };
  auto prompt_for = [&](DatasetId id) -> const PromptTemplate& {
    auto it = prompts.find(id);
    if (it == prompts.end()) throw ConfigError("no prompt for " + std::string(to_string(id)));
    return it->second;
  };

  struct Done {
    PredictionEntry entry;
    std::exception_ptr error;
  };
  CompletionQueue<Done> completions;
  const std::size_t parallelism =
      options.parallelism > 0 ? options.parallelism
                              : static_cast<std::size_t>(model.config().max_concurrent_requests);
  std::exception_ptr fatal;
  bool aborted = false;
  bool stopping = false;
  std::size_t appended = 0;
  std::size_t in_flight = 0;
  std::size_t next = 0;
  {
    WorkerPool workers(parallelism);
    for (;;) {
      while (!aborted && !stopping && !fatal && in_flight < parallelism && next < manifest.size()) {
        const ImageRecord& record = manifest[next++];
        if (results.count(record.image_id)) continue;
        const auto& family = family_for(record.dataset);
        const auto& prompt = prompt_for(record.dataset);
        ++in_flight;
        workers.submit([&, rec = &record, fam = &family, pr = &prompt] {
          Done done;
          done.entry.record = *rec;
          try {
            modelio::ChatRequest request;
            request.image = modelio::encode_image(*rec, options.encode);
            request.system_prompt = pr->render_system();
            request.user_text = pr->user_prompt;
            request.response_format_json = true;
            auto response = model.chat_complete(request, {"predict", rec->image_id, 0});
            done.entry.raw_response = response.text;
            try {
              done.entry.caption = parse_structured_caption(response.text, fam->normalization);
              done.entry.status = PredictionStatus::kOk;
            } catch (const ParseFailure& e) {
              done.entry.status = PredictionStatus::kMalformed;
              done.entry.error = e.what();
            }
          } catch (const ImageDecodeError& e) {
            done.entry.status = PredictionStatus::kFailed;
            done.entry.error = std::string("image decode: ") + e.what();
          } catch (const EndpointRejected& e) {
            if (is_systemic_rejection(e)) {
              done.error = std::current_exception();
            } else {
              done.entry.status = PredictionStatus::kFailed;
              done.entry.error = e.what();
            }
          } catch (const EndpointExhausted& e) {
            done.entry.status = PredictionStatus::kFailed;
            done.entry.error = e.what();
          } catch (...) {
            done.error = std::current_exception();
          }
          completions.push(std::move(done));
        });
      }
      if (in_flight == 0) break;
      auto done = completions.pop();
      --in_flight;
      if (aborted) continue;
      if (done.error) {
        if (!fatal) fatal = done.error;
        continue;
      }
      if (writer) writer->append(to_json(done.entry));
      auto id = done.entry.record.image_id;
      results.insert_or_assign(std::move(id), std::move(done.entry));
      ++appended;
      if (options.abort_after_records && appended >= *options.abort_after_records) aborted = true;
      if (options.should_stop && options.should_stop()) stopping = true;
    }
  }
  if (fatal) std::rethrow_exception(fatal);
  if (aborted || stopping) {
    throw Interrupted("inference interrupted after " + std::to_string(appended) + " record(s)");
  }

  for (const auto& record : manifest) {
    auto it = results.find(record.image_id);
    if (it == results.end()) continue;
    auto entry = it->second;
    entry.record = record;
    set.entries.push_back(std::move(entry));
  }
  std::sort(set.entries.begin(), set.entries.end(),
            [](const PredictionEntry& a, const PredictionEntry& b) {
              return a.record.image_id < b.record.image_id;
            });
  return set;
}

}  // namespace medcap::distill
