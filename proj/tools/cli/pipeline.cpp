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

#include "pipeline.hpp"

#include <fcntl.h>
#include <spdlog/spdlog.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <csignal>
#include <ctime>
#include <set>

#include "medcap/capmetrics.hpp"
#include "medcap/clsmetrics.hpp"
#include "medcap/corpus.hpp"
#include "medcap/distill.hpp"
#include "medcap/errors.hpp"
#include "medcap/ingest.hpp"
#include "medcap/report.hpp"
#include "medcap/util.hpp"

namespace medcap::cli {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run directory and stage records

RunDirectory::RunDirectory(fs::path root) : root_(fs::absolute(std::move(root))) {
  fs::create_directories(root_);
  const auto lock_path = root_ / ".medcap.lock";
  lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
  if (lock_fd_ < 0) throw IoError("cannot open lock file " + lock_path.string());
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw IoError("run directory " + root_.string() + " is in use by another process");
  }
}

RunDirectory::~RunDirectory() {
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

json to_json(const StageRecord& r) {
  return {{"stage", r.stage},           {"fingerprint", r.fingerprint},
          {"inputs", r.inputs},         {"outputs", r.outputs},
          {"started_at", r.started_at}, {"finished_at", r.finished_at}};
}

StageRecord stage_record_from_json(const json& j) {
  try {
    StageRecord r;
    r.stage = j.at("stage").get<std::string>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    r.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    r.started_at = j.value("started_at", "");
    r.finished_at = j.value("finished_at", "");
    return r;
  } catch (const json::exception& e) {
    throw InputError(std::string("bad stage record: ") + e.what());
  }
}

std::string fingerprint_path(const fs::path& path) {
  if (!fs::is_directory(path)) return sha256_hex(read_file_bytes(path));
  std::vector<std::string> lines;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    lines.push_back(fs::relative(entry.path(), path).generic_string() + "\t" +
                    std::to_string(entry.file_size()) + "\t" +
                    std::to_string(entry.last_write_time().time_since_epoch().count()));
  }
  std::sort(lines.begin(), lines.end());
  std::string listing;
  for (const auto& l : lines) listing += l + "\n";
  return sha256_hex(listing);
}

namespace {

std::string utc_now() {
  const auto t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string display_path(const RunDirectory& dir, const fs::path& p) {
  const auto rel = fs::absolute(p).lexically_relative(dir.root());
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return fs::absolute(p).generic_string();
}

fs::path resolve_display(const RunDirectory& dir, const std::string& key) {
  fs::path p(key);
  return p.is_absolute() ? p : dir.root() / p;
}

}  // namespace

StageOutcome run_stage(RunDirectory& dir, const StageSpec& spec, bool force) {
  StageRecord record;
  record.stage = spec.name;
  for (const auto& input : spec.inputs) {
    if (!fs::exists(input)) throw StageDependencyError(display_path(dir, input));
    record.inputs[display_path(dir, input)] = fingerprint_path(input);
  }
  record.fingerprint = sha256_hex(
      json{{"stage", spec.name}, {"config", spec.config}, {"inputs", record.inputs}}.dump());

  const auto record_path = dir.at("stages/" + spec.name + ".json");
  if (!force && fs::exists(record_path)) {
    try {
      const auto previous =
          stage_record_from_json(json::parse(read_file_text(record_path)));
      const bool unchanged =
          previous.fingerprint == record.fingerprint &&
          std::all_of(previous.outputs.begin(), previous.outputs.end(), [&](const auto& kv) {
            const auto p = resolve_display(dir, kv.first);
            return fs::exists(p) && fingerprint_path(p) == kv.second;
          });
      if (unchanged) {
        spdlog::info("{}: inputs and configuration unchanged, skipping (use --force to rerun)",
                     spec.name);
        return StageOutcome::kSkipped;
      }
    } catch (const std::exception& e) {
      spdlog::warn("{}: ignoring unreadable stage record: {}", spec.name, e.what());
    }
  }

  spdlog::info("{}: running", spec.name);
  record.started_at = utc_now();
  const auto outputs = spec.run(StageContext{record.fingerprint, force});
  for (const auto& out : outputs) record.outputs[display_path(dir, out)] = fingerprint_path(out);
  record.finished_at = utc_now();
  write_file_atomic(record_path, to_json(record).dump(2) + "\n");
  spdlog::info("{}: done, {} output file(s)", spec.name, record.outputs.size());
  return StageOutcome::kRan;
}

// ---------------------------------------------------------------------------
// Clients

ClientRegistry::ClientRegistry(const RunConfig& config, const RunDirectory& dir)
    : config_(config), dir_(dir) {}

modelio::ModelClient& ClientRegistry::get(const std::string& endpoint) {
  auto it = clients_.find(endpoint);
  if (it != clients_.end()) return *it->second;
  const auto& cfg = config_.endpoint(endpoint);
  auto audit = std::make_shared<modelio::AuditLog>(dir_.at("audit/" + endpoint + ".jsonl"));
  auto client = std::make_unique<modelio::ModelClient>(cfg, std::move(audit),
                                                       modelio::system_clock(), config_.seed);
  return *clients_.emplace(endpoint, std::move(client)).first->second;
}

void health_check(modelio::ModelClient& client, bool embeddings) {
  const modelio::RequestTag tag{"health", "health", 0};
  if (embeddings) {
    client.embed({"health check"}, tag);
  } else {
    client.chat_complete({"Health check.", "Reply with OK.", std::nullopt, false}, tag);
  }
  spdlog::info("endpoint '{}' is reachable", client.config().name);
}

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

}  // namespace

bool stop_requested() { return g_stop.load(); }

void install_signal_handlers() {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
}

// ---------------------------------------------------------------------------
// Stages

namespace {

constexpr std::string_view kManifest = "ingest/manifest.jsonl";
constexpr std::string_view kCorpus = "distill/corpus.jsonl";
constexpr std::string_view kSplit = "split/split_manifest.json";
constexpr std::string_view kClassification = "eval/classification.json";
constexpr std::string_view kCaptions = "eval/captions.json";

json family_json(const DatasetFamily& f) {
  return {{"id", to_string(f.id)},
          {"vocabulary", f.canonical_names()},
          {"synonyms", f.normalization.synonyms()}};
}

json prompt_json(const distill::PromptTemplate& p) {
  return {{"system", p.render_system()}, {"user", p.user_prompt}};
}

json quota_json(const distill::QuotaPlan& plan) {
  json classes = json::array();
  for (const auto& [label, quota] : plan.per_class_quota) classes.push_back({label, quota});
  return {{"classes", classes}, {"attempt_budget_per_class", plan.attempt_budget_per_class}};
}

json encode_json(const modelio::EncodePolicy& e) {
  return {{"max_dimension", e.max_dimension}, {"jpeg_quality", e.jpeg_quality}};
}

json endpoint_json(const RunConfig& config, const std::string& name) {
  return modelio::to_json(config.endpoint(name));
}

fs::path predictions_path(RunDirectory& dir, const CandidateConfig& c) {
  return dir.at("predict/" + slug(c.label) + "/predictions.jsonl");
}

// Working files (checkpoints) survive interruptions but not a change of
// inputs or configuration.
void reset_checkpoints_if_stale(const fs::path& stamp, const StageContext& ctx,
                                const std::vector<fs::path>& checkpoints) {
  std::string previous;
  if (fs::exists(stamp)) previous = trim(read_file_text(stamp));
  if (ctx.force || previous != ctx.fingerprint) {
    for (const auto& c : checkpoints) {
      if (fs::exists(c)) {
        spdlog::info("discarding checkpoint {} ({})", c.string(),
                     ctx.force ? "--force" : "inputs or configuration changed");
        fs::remove(c);
      }
    }
  }
  write_file_atomic(stamp, ctx.fingerprint + "\n");
}

StageSpec ingest_stage(const RunConfig& config, RunDirectory& dir) {
  StageSpec spec;
  spec.name = "ingest";
  json datasets = json::array();
  for (const auto& d : config.datasets) {
    spec.inputs.push_back(d.csv);
    spec.inputs.push_back(d.adapter.image_dir);
    auto dj = family_json(d.family);
    dj["id_column"] = d.adapter.id_column;
    dj["label_column"] = d.adapter.label_column;
    dj["label_delimiter"] = d.adapter.label_delimiter ? json(*d.adapter.label_delimiter) : json();
    dj["image_extension"] = d.adapter.image_extension;
    datasets.push_back(std::move(dj));
  }
  spec.config = {{"datasets", datasets}, {"override_validation", config.override_validation}};
  spec.run = [&config, &dir](const StageContext&) {
    Manifest manifest;
    json stats = json::object();
    for (const auto& d : config.datasets) {
      auto result = ingest::ingest_csv(d.csv, d.adapter, d.family);
      stats[std::string(to_string(d.family.id))] = ingest::to_json(result.stats);
      manifest.insert(manifest.end(), result.manifest.begin(), result.manifest.end());
    }
    const auto validation = ingest::validate_manifest(manifest, config.families());
    const auto validation_path = dir.at("ingest/validation.json");
    write_file_atomic(validation_path, ingest::to_json(validation).dump(2) + "\n");
    if (!validation.ok()) {
      const auto what = std::to_string(validation.duplicate_ids.size()) + " duplicate id(s), " +
                        std::to_string(validation.out_of_vocabulary.size()) +
                        " out-of-vocabulary label(s); see " + validation_path.string();
      if (!config.override_validation) throw InputError("manifest validation failed: " + what);
      spdlog::warn("manifest validation failed ({}), continuing because of the override", what);
    }
    const auto manifest_path = dir.at(kManifest);
    const auto stats_path = dir.at("ingest/stats.json");
    write_manifest(manifest_path, manifest);
    write_file_atomic(stats_path, stats.dump(2) + "\n");
    return std::vector<fs::path>{manifest_path, stats_path, validation_path};
  };
  return spec;
}

StageSpec distill_stage(const RunConfig& config, RunDirectory& dir, ClientRegistry& clients) {
  StageSpec spec;
  spec.name = "distill";
  spec.inputs = {dir.at(kManifest)};
  json datasets = json::array();
  for (const auto& d : config.datasets) {
    auto dj = family_json(d.family);
    dj["quota"] = quota_json(d.quota);
    dj["prompt"] = prompt_json(d.prompt);
    datasets.push_back(std::move(dj));
  }
  spec.config = {{"datasets", datasets},
                 {"teacher", endpoint_json(config, config.teacher)},
                 {"encode", encode_json(config.encode)}};
  spec.run = [&config, &dir, &clients](const StageContext& ctx) {
    const auto pool = read_manifest(dir.at(kManifest));
    std::vector<fs::path> checkpoints;
    for (const auto& d : config.datasets) {
      checkpoints.push_back(
          dir.at("distill/checkpoint_" + std::string(to_string(d.family.id)) + ".jsonl"));
    }
    reset_checkpoints_if_stale(dir.at("distill/checkpoint.stamp"), ctx, checkpoints);

    auto& teacher = clients.get(config.teacher);
    std::vector<DistillationSample> retained;
    json yield = json::object();
    for (std::size_t i = 0; i < config.datasets.size(); ++i) {
      const auto& d = config.datasets[i];
      distill::LoopOptions options;
      options.checkpoint = checkpoints[i];
      options.encode = config.encode;
      options.should_stop = stop_requested;
      auto result = distill::run_quota_loop(pool, d.quota, d.prompt, teacher, d.family, options);
      spdlog::info("distill {}: retained {} sample(s), {} class(es) excluded",
                   to_string(d.family.id), result.retained.size(),
                   result.stats.excluded_classes.size());
      yield[std::string(to_string(d.family.id))] = distill::to_json(result.stats);
      retained.insert(retained.end(), std::make_move_iterator(result.retained.begin()),
                      std::make_move_iterator(result.retained.end()));
    }
    const auto corpus_path = dir.at(kCorpus);
    const auto yield_path = dir.at("distill/yield.json");
    distill::write_corpus(corpus_path, distill::to_corpus(retained));
    write_file_atomic(yield_path, yield.dump(2) + "\n");
    return std::vector<fs::path>{corpus_path, yield_path};
  };
  return spec;
}

StageSpec split_stage(const RunConfig& config, RunDirectory& dir) {
  StageSpec spec;
  spec.name = "split";
  spec.inputs = {dir.at(kCorpus)};
  spec.config = {{"ratios", config.split_ratios}, {"seed", config.seed}};
  spec.run = [&config, &dir](const StageContext&) {
    const auto corpus = distill::read_corpus(dir.at(kCorpus));
    const auto manifest = corpus::split(corpus, config.split_ratios, config.seed);
    const auto& t = manifest.counts.total;
    spdlog::info("split: train {} / validation {} / test {}", t[0], t[1], t[2]);
    const auto out = dir.at(kSplit);
    write_file_atomic(out, corpus::serialize(manifest));
    return std::vector<fs::path>{out};
  };
  return spec;
}

StageSpec emit_stage(const RunConfig& config, RunDirectory& dir) {
  StageSpec spec;
  spec.name = "emit-corpus";
  spec.inputs = {dir.at(kCorpus), dir.at(kSplit)};
  json prompts = json::object();
  for (const auto& d : config.datasets) {
    prompts[std::string(to_string(d.family.id))] = prompt_json(d.prompt);
  }
  spec.config = {{"prompts", prompts}};
  spec.run = [&config, &dir](const StageContext&) {
    const auto corpus = distill::read_corpus(dir.at(kCorpus));
    const auto split =
        corpus::split_manifest_from_json(json::parse(read_file_text(dir.at(kSplit))));
    const auto result =
        corpus::emit_instruction_corpus(split, corpus, config.prompts(), dir.at("corpus"));
    spdlog::info("emit-corpus: {} train and {} validation conversation(s)",
                 result.train_records, result.validation_records);
    return std::vector<fs::path>{result.train_path, result.validation_path};
  };
  return spec;
}

Manifest test_manifest(RunDirectory& dir) {
  const auto corpus = distill::read_corpus(dir.at(kCorpus));
  const auto split =
      corpus::split_manifest_from_json(json::parse(read_file_text(dir.at(kSplit))));
  const auto ids = split.ids_in(corpus::Split::kTest);
  const std::set<std::string> test(ids.begin(), ids.end());
  Manifest out;
  for (const auto& e : corpus) {
    if (test.contains(e.record.image_id)) out.push_back(e.record);
  }
  return out;
}

void require_candidates(const RunConfig& config) {
  if (config.candidates.empty()) throw ConfigError("no candidate models configured");
}

StageSpec predict_stage(const RunConfig& config, RunDirectory& dir, ClientRegistry& clients) {
  StageSpec spec;
  spec.name = "predict";
  spec.inputs = {dir.at(kCorpus), dir.at(kSplit)};
  json candidates = json::array();
  for (const auto& c : config.candidates) {
    candidates.push_back({{"label", c.label}, {"endpoint", endpoint_json(config, c.endpoint)}});
  }
  json datasets = json::array();
  for (const auto& d : config.datasets) {
    auto dj = family_json(d.family);
    dj["prompt"] = prompt_json(d.prompt);
    datasets.push_back(std::move(dj));
  }
  spec.config = {{"candidates", candidates},
                 {"datasets", datasets},
                 {"encode", encode_json(config.encode)}};
  spec.run = [&config, &dir, &clients](const StageContext& ctx) {
    require_candidates(config);
    for (const auto& c : config.candidates) health_check(clients.get(c.endpoint), false);
    const auto manifest = test_manifest(dir);
    if (manifest.empty()) throw EmptyInput("the test split is empty");
    std::vector<fs::path> checkpoints;
    for (const auto& c : config.candidates) {
      checkpoints.push_back(dir.at("predict/" + slug(c.label) + "/checkpoint.jsonl"));
    }
    reset_checkpoints_if_stale(dir.at("predict/checkpoint.stamp"), ctx, checkpoints);
    std::vector<fs::path> outputs;
    for (std::size_t i = 0; i < config.candidates.size(); ++i) {
      const auto& c = config.candidates[i];
      distill::LoopOptions options;
      options.checkpoint = checkpoints[i];
      options.encode = config.encode;
      options.should_stop = stop_requested;
      auto predictions = distill::run_inference(manifest, config.prompts(), clients.get(c.endpoint),
                                                config.families(), options);
      predictions.model = c.label;
      spdlog::info("predict {}: {} ok, {} malformed, {} failed", c.label,
                   predictions.count(distill::PredictionStatus::kOk),
                   predictions.count(distill::PredictionStatus::kMalformed),
                   predictions.count(distill::PredictionStatus::kFailed));
      const auto out = predictions_path(dir, c);
      distill::write_predictions(out, predictions);
      outputs.push_back(out);
    }
    return outputs;
  };
  return spec;
}

StageSpec eval_cls_stage(const RunConfig& config, RunDirectory& dir) {
  StageSpec spec;
  spec.name = "eval-cls";
  json datasets = json::array();
  for (const auto& d : config.datasets) datasets.push_back(family_json(d.family));
  json labels = json::array();
  for (const auto& c : config.candidates) {
    spec.inputs.push_back(predictions_path(dir, c));
    labels.push_back(c.label);
  }
  spec.config = {{"datasets", datasets}, {"candidates", labels}};
  spec.run = [&config, &dir](const StageContext&) {
    require_candidates(config);
    json results = json::array();
    for (const auto& c : config.candidates) {
      const auto predictions = distill::read_predictions(predictions_path(dir, c));
      for (const auto& d : config.datasets) {
        std::vector<clsmetrics::LabelPair> pairs;
        for (const auto& e : predictions.entries) {
          if (e.record.dataset != d.family.id) continue;
          std::optional<std::string> predicted;
          if (e.caption) predicted = e.caption->prediction.canonical;
          pairs.push_back({e.record.ground_truth.canonical, predicted});
        }
        if (pairs.empty()) continue;
        const auto matrix = clsmetrics::build_confusion(pairs, d.family.canonical_names());
        auto report = clsmetrics::compute_metrics(matrix);
        report.dataset = std::string(to_string(d.family.id));
        report.model = c.label;
        spdlog::info("eval-cls {} {}: accuracy {:.4f}, macro F1 {:.4f}", c.label, report.dataset,
                     report.accuracy, report.macro_f1);
        results.push_back({{"model", c.label},
                           {"dataset", report.dataset},
                           {"report", clsmetrics::to_json(report)},
                           {"confusion", clsmetrics::to_json(matrix)}});
      }
    }
    const auto out = dir.at(kClassification);
    write_file_atomic(out, results.dump(2) + "\n");
    return std::vector<fs::path>{out};
  };
  return spec;
}

// The candidate answer is the flattened description when the output parsed,
// and the raw text otherwise.
std::string candidate_answer(const distill::PredictionEntry& e) {
  if (e.caption) return flatten_description(e.caption->description);
  return trim(e.raw_response);
}

StageSpec eval_rag_stage(const RunConfig& config, RunDirectory& dir, ClientRegistry& clients) {
  StageSpec spec;
  spec.name = "eval-rag";
  spec.inputs = {dir.at(kCorpus)};
  json labels = json::array();
  for (const auto& c : config.candidates) {
    spec.inputs.push_back(predictions_path(dir, c));
    labels.push_back(c.label);
  }
  json questions = json::object();
  for (const auto& d : config.datasets) {
    questions[std::string(to_string(d.family.id))] = d.prompt.user_prompt;
  }
  spec.config = {
      {"candidates", labels},
      {"questions", questions},
      {"judge", config.judge.empty() ? json() : endpoint_json(config, config.judge)},
      {"embedder", config.embedder.empty() ? json() : endpoint_json(config, config.embedder)},
      {"n_questions", config.metrics.n_questions},
      {"correctness_weights", {config.metrics.correctness_weights.first,
                               config.metrics.correctness_weights.second}}};
  spec.run = [&config, &dir, &clients](const StageContext&) {
    require_candidates(config);
    if (config.judge.empty() || config.embedder.empty()) {
      throw ConfigError("eval-rag needs roles.judge and roles.embedder");
    }
    auto& judge = clients.get(config.judge);
    auto& embedder = clients.get(config.embedder);
    health_check(judge, false);
    health_check(embedder, true);

    std::map<std::string, StructuredCaption> references;
    for (auto& e : distill::read_corpus(dir.at(kCorpus))) {
      references.emplace(e.record.image_id, std::move(e.caption));
    }
    std::vector<fs::path> outputs;
    json summaries = json::object();
    for (const auto& c : config.candidates) {
      const auto predictions = distill::read_predictions(predictions_path(dir, c));
      std::vector<capmetrics::CaptionEvalCase> cases;
      std::vector<capmetrics::CaseResult> results;
      for (const auto& e : predictions.entries) {
        const auto dataset = std::string(to_string(e.record.dataset));
        auto ref = references.find(e.record.image_id);
        const auto answer = candidate_answer(e);
        if (ref == references.end() || answer.empty()) {
          capmetrics::CaseResult r{e.record.image_id, dataset, {}};
          const std::string why =
              ref == references.end() ? "no reference caption" : "no candidate answer";
          for (const char* m : {"faithfulness", "answer_relevancy", "answer_correctness"}) {
            r.scores.unavailable[m] = why;
          }
          results.push_back(std::move(r));
          continue;
        }
        cases.push_back(capmetrics::CaptionEvalCase::make(
            e.record.image_id, dataset, config.dataset(e.record.dataset).prompt.user_prompt,
            flatten_description(ref->second.description), answer));
      }
      if (!cases.empty()) {
        auto evaluation = capmetrics::evaluate_captions(cases, judge, embedder, config.metrics);
        results.insert(results.end(), evaluation.cases.begin(), evaluation.cases.end());
      }
      std::sort(results.begin(), results.end(),
                [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
      std::vector<json> lines;
      for (const auto& r : results) lines.push_back(capmetrics::to_json(r));
      const auto cases_path = dir.at("eval/captions_" + slug(c.label) + ".jsonl");
      write_jsonl(cases_path, lines);
      outputs.push_back(cases_path);
      summaries[c.label] = capmetrics::to_json(capmetrics::summarize(results));
    }
    const auto out = dir.at(kCaptions);
    write_file_atomic(out, summaries.dump(2) + "\n");
    outputs.push_back(out);
    return outputs;
  };
  return spec;
}

std::string endpoint_label(const RunConfig& config, const std::string& name) {
  return name + " (" + config.endpoint(name).model_name + ")";
}

StageSpec report_stage(const RunConfig& config, RunDirectory& dir) {
  StageSpec spec;
  spec.name = "report";
  spec.inputs = {dir.at(kClassification), dir.at(kCaptions)};
  spec.config = {{"config_sha256", config.hash}, {"formats", config.report_formats}};
  spec.run = [&config, &dir](const StageContext&) {
    const auto classification = json::parse(read_file_text(dir.at(kClassification)));
    const auto captions = json::parse(read_file_text(dir.at(kCaptions)));
    std::vector<report::ModelResults> models;
    for (const auto& c : config.candidates) {
      report::ModelResults m;
      m.label = c.label;
      for (const auto& entry : classification) {
        if (entry.at("model") != c.label) continue;
        m.classification.emplace(dataset_id_from_string(entry.at("dataset").get<std::string>()),
                                 clsmetrics::classification_report_from_json(entry.at("report")));
      }
      if (captions.contains(c.label)) {
        m.captions = capmetrics::caption_summary_from_json(captions.at(c.label));
      }
      models.push_back(std::move(m));
    }
    report::RunMetadata meta;
    meta.seed = config.seed;
    meta.config_hash = config.hash;
    meta.endpoints["teacher"] = endpoint_label(config, config.teacher);
    if (!config.judge.empty()) meta.endpoints["judge"] = endpoint_label(config, config.judge);
    if (!config.embedder.empty()) {
      meta.endpoints["embedder"] = endpoint_label(config, config.embedder);
    }
    for (const auto& c : config.candidates) {
      meta.endpoints["candidate " + c.label] = endpoint_label(config, c.endpoint);
    }
    meta.base_label = config.label_for_role("base");
    meta.finetuned_label = config.label_for_role("finetuned");
    const auto built = report::assemble(models, config.families(), std::move(meta));

    std::vector<fs::path> outputs;
    for (const auto& name : config.report_formats) {
      const auto format = report::format_from_string(name);
      const char* file = format == report::Format::kJson  ? "report.json"
                         : format == report::Format::kCsv ? "report.csv"
                                                          : "report.txt";
      const auto out = dir.at(file);
      write_file_atomic(out, report::render(built, format));
      outputs.push_back(out);
    }
    return outputs;
  };
  return spec;
}

}  // namespace

StageSpec make_stage(std::string_view name, const RunConfig& config, RunDirectory& dir,
                     ClientRegistry& clients) {
  if (name == "ingest") return ingest_stage(config, dir);
  if (name == "distill") return distill_stage(config, dir, clients);
  if (name == "split") return split_stage(config, dir);
  if (name == "emit-corpus") return emit_stage(config, dir);
  if (name == "predict") return predict_stage(config, dir, clients);
  if (name == "eval-cls") return eval_cls_stage(config, dir);
  if (name == "eval-rag") return eval_rag_stage(config, dir, clients);
  if (name == "report") return report_stage(config, dir);
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

}  // namespace medcap::cli
