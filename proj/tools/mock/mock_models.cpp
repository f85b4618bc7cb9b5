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

#include "mock_models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "medcap/capmetrics.hpp"
#include "medcap/distill.hpp"
#include "medcap/util.hpp"

namespace medcap::mock {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <std::size_t N>
std::string_view pick(const std::string_view (&options)[N], std::uint64_t seed,
                      std::string_view key) {
  const auto i = static_cast<std::size_t>(unit_hash(seed, key) * N);
  return options[std::min(i, N - 1)];
}

constexpr std::string_view kZones[] = {"central", "peripheral", "upper", "lower", "medial",
                                       "lateral"};
constexpr std::string_view kPatterns[] = {"subtle", "focal", "diffuse", "patchy", "linear",
                                          "nodular"};
constexpr std::string_view kQuality[] = {"good", "adequate", "fair"};
constexpr std::string_view kNoiseNouns[] = {"artefacts", "shadows", "reflections", "speckles",
                                            "streaks"};
constexpr std::string_view kNoiseAreas[] = {"corner", "border", "background", "margin"};

std::string modality(DatasetId id) {
  switch (id) {
    case DatasetId::kFundus: return "Colour fundus photograph of the posterior pole";
    case DatasetId::kDermatology: return "Dermoscopic photograph of a pigmented skin lesion";
    case DatasetId::kChestXray: return "Frontal chest radiograph";
  }
  return {};
}

std::string region(DatasetId id) {
  switch (id) {
    case DatasetId::kFundus: return "Retina including the optic disc and macula";
    case DatasetId::kDermatology: return "Skin surface at the lesion site";
    case DatasetId::kChestXray: return "Thorax including both lungs and the heart";
  }
  return {};
}

}  // namespace

double unit_hash(std::uint64_t seed, std::string_view key) {
  const auto h = mix(seed ^ fnv1a(key));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

DescriptionSections reference_sections(const ImageRecord& record, const std::string& label) {
  const auto& id = record.image_id;
  DescriptionSections s;
  s.image_type = modality(record.dataset) + ".";
  s.anatomical_region = region(record.dataset) + ".";
  s.key_findings = "Features are typical of " + label + ". The " +
                   std::string(pick(kZones, 1, id)) + " region shows " +
                   std::string(pick(kPatterns, 2, id)) + " change. Image quality is " +
                   std::string(pick(kQuality, 3, id)) + " for interpretation.";
  s.clinical_significance = "The appearance supports a reading of " + label + ".";
  return s;
}

CaptionModel::CaptionModel(const Manifest& pool, std::vector<DatasetFamily> families,
                           CaptionModelOptions options)
    : families_(std::move(families)), options_(options) {
  for (const auto& record : pool) {
    try {
      by_sha256_.emplace(sha256_hex(read_file_bytes(record.image_path)), record);
    } catch (const std::exception&) {
      // Unreadable images are never sent by the pipeline.
    }
  }
}

const DatasetFamily& CaptionModel::family_of(DatasetId id) const {
  for (const auto& f : families_) {
    if (f.id == id) return f;
  }
  throw std::runtime_error("mock model has no family for " + std::string(to_string(id)));
}

bool CaptionModel::answers_wrongly(const std::string& image_id) const {
  return unit_hash(options_.seed, image_id + "#wrong") < options_.error_rate;
}

bool CaptionModel::answers_malformed(const std::string& image_id, int reask) const {
  const bool first = unit_hash(options_.seed, image_id + "#malformed") < options_.malformed_rate;
  if (reask == 0) return first;
  return first &&
         unit_hash(options_.seed, image_id + "#malformed-reask") < options_.malformed_reask_rate;
}

std::string CaptionModel::predicted_label(const ImageRecord& record) const {
  const auto names = family_of(record.dataset).canonical_names();
  if (!answers_wrongly(record.image_id) || names.size() < 2) return record.ground_truth.canonical;
  const auto truth = std::find(names.begin(), names.end(), record.ground_truth.canonical);
  const auto t = static_cast<std::size_t>(truth - names.begin());
  const auto shift =
      1 + static_cast<std::size_t>(unit_hash(options_.seed, record.image_id + "#shift") *
                                   static_cast<double>(names.size() - 1));
  return names[(t + std::min(shift, names.size() - 1)) % names.size()];
}

std::string CaptionModel::caption_json(const ImageRecord& record) const {
  const auto label = predicted_label(record);
  auto sections = reference_sections(record, label);
  // Replace findings sentences the model fails to reproduce.
  std::string findings;
  const std::string reference = sections.key_findings;
  std::size_t start = 0;
  for (int i = 0; start < reference.size(); ++i) {
    auto end = reference.find(". ", start);
    if (end == std::string::npos) end = reference.size() - 1;
    std::string sentence = reference.substr(start, end - start + 1);
    start = end + 2;
    const auto key = record.image_id + "#fidelity" + std::to_string(i);
    if (unit_hash(options_.seed, key) >= options_.fidelity) {
      sentence = "Scattered " + std::string(pick(kNoiseNouns, options_.seed, key + "n")) +
                 " obscure the " + std::string(pick(kNoiseAreas, options_.seed, key + "a")) +
                 " field.";
    }
    if (!findings.empty()) findings += " ";
    findings += sentence;
  }
  sections.key_findings = findings;
  json caption{{"prediction", label},
               {"description",
                {{"image_type", sections.image_type},
                 {"anatomical_region", sections.anatomical_region},
                 {"key_findings", sections.key_findings},
                 {"clinical_significance", sections.clinical_significance}}}};
  return caption.dump();
}

MockReply CaptionModel::operator()(const MockRequest& request) const {
  auto bytes = image_bytes_of(request);
  // Text-only requests (health checks) get a plain answer.
  if (!bytes) return chat_reply("OK");
  const auto sha = sha256_hex(*bytes);
  auto it = by_sha256_.find(sha);
  MockReply reply;
  if (it == by_sha256_.end()) {
    reply = chat_reply(R"({"prediction": "unrecognised", "description": "unknown image"})");
  } else {
    const auto& record = it->second;
    const int reask =
        user_text_of(request).find(distill::kReaskNudge) != std::string::npos ? 1 : 0;
    if (answers_malformed(record.image_id, reask)) {
      reply = chat_reply("The image appears to show " + predicted_label(record) +
                         " but I am unable to format the answer.");
    } else {
      reply = chat_reply(caption_json(record));
    }
  }
  reply.delay = options_.delay;
  return reply;
}

std::vector<std::string> content_words(std::string_view text) {
  static const std::set<std::string, std::less<>> kStop = {
      "the", "and", "for", "with", "are", "was", "this", "that", "from", "into", "its",
      "has", "have", "not", "but", "what", "does", "about", "show", "shows", "any", "there"};
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    const bool numeric = std::any_of(word.begin(), word.end(),
                                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
    if ((word.size() >= 3 || numeric) && !kStop.contains(word)) out.push_back(word);
    word.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      word += static_cast<char>(std::tolower(u));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

std::vector<std::string> HeuristicJudge::decompose(std::string_view text) const {
  std::vector<std::string> out;
  std::size_t line_start = 0;
  while (line_start <= text.size()) {
    auto line_end = text.find('\n', line_start);
    if (line_end == std::string_view::npos) line_end = text.size();
    std::string_view line = text.substr(line_start, line_end - line_start);
    line_start = line_end + 1;
    // Drop an upper-case "HEADER:" prefix.
    if (auto colon = line.find(':'); colon != std::string_view::npos) {
      const auto head = line.substr(0, colon);
      if (!head.empty() && std::none_of(head.begin(), head.end(), [](char c) {
            return std::islower(static_cast<unsigned char>(c));
          })) {
        line = line.substr(colon + 1);
      }
    }
    std::size_t s = 0;
    while (s < line.size()) {
      auto e = line.find(". ", s);
      if (e == std::string_view::npos) e = line.size();
      auto sentence = trim(line.substr(s, e - s));
      while (!sentence.empty() && sentence.back() == '.') sentence.pop_back();
      if (!content_words(sentence).empty()) out.push_back(sentence);
      s = e + 2;
    }
  }
  return out;
}

bool HeuristicJudge::supported(std::string_view statement, std::string_view context) const {
  const auto words = content_words(statement);
  if (words.empty()) return false;
  const auto ctx = content_words(context);
  const std::set<std::string> vocab(ctx.begin(), ctx.end());
  const auto hits = std::count_if(words.begin(), words.end(),
                                  [&](const std::string& w) { return vocab.contains(w); });
  return static_cast<double>(hits) >= threshold_ * static_cast<double>(words.size());
}

MockReply HeuristicJudge::operator()(const MockRequest& request) const {
  using capmetrics::JudgeTask;
  using capmetrics::judge_system_prompt;
  const auto system = system_prompt_of(request);
  const auto user = user_text_of(request);
  auto value = [&](std::string_view marker) {
    return capmetrics::read_marked_value(user, marker).value_or(json());
  };
  auto as_text = [](const json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); };
  auto as_list = [](const json& j) {
    std::vector<std::string> out;
    if (j.is_array()) {
      for (const auto& v : j) out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    return out;
  };
  auto join = [](const std::vector<std::string>& items) {
    std::string out;
    for (const auto& s : items) out += s + "\n";
    return out;
  };

  MockReply reply;
  if (system == judge_system_prompt(JudgeTask::kDecompose)) {
    reply = chat_reply(json(decompose(as_text(value(capmetrics::kMarkerText)))).dump());
  } else if (system == judge_system_prompt(JudgeTask::kVerify)) {
    const auto context = as_text(value(capmetrics::kMarkerContext));
    json verdicts = json::array();
    for (const auto& s : as_list(value(capmetrics::kMarkerStatements))) {
      verdicts.push_back(supported(s, context) ? 1 : 0);
    }
    reply = chat_reply(verdicts.dump());
  } else if (system == judge_system_prompt(JudgeTask::kQuestions)) {
    const auto statements = decompose(as_text(value(capmetrics::kMarkerAnswer)));
    const auto count = value(capmetrics::kMarkerCount);
    const int n = count.is_number_integer() ? count.get<int>() : 3;
    json questions = json::array();
    for (int i = 0; i < n; ++i) {
      std::string q = "What does the image show";
      if (!statements.empty()) {
        const auto words = content_words(statements[static_cast<std::size_t>(i) % statements.size()]);
        q += " about";
        for (const auto& w : words) q += " " + w;
      }
      questions.push_back(q + "?");
    }
    reply = chat_reply(questions.dump());
  } else if (system == judge_system_prompt(JudgeTask::kClassifyClaims)) {
    const auto answer = as_list(value(capmetrics::kMarkerAnswerStatements));
    const auto reference = as_list(value(capmetrics::kMarkerReferenceStatements));
    const auto answer_text = join(answer);
    const auto reference_text = join(reference);
    json a = json::array();
    json r = json::array();
    for (const auto& s : answer) a.push_back(supported(s, reference_text) ? 1 : 0);
    for (const auto& s : reference) r.push_back(supported(s, answer_text) ? 1 : 0);
    reply = chat_reply(json{{"answer", a}, {"reference", r}}.dump());
  } else {
    reply = chat_reply("ok");
  }
  reply.delay = delay_;
  return reply;
}

std::vector<double> HashingEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dimension_, 0.0);
  for (const auto& w : content_words(text)) v[fnv1a(w) % dimension_] += 1.0;
  return v;
}

MockReply HashingEmbedder::operator()(const MockRequest& request) const {
  const auto inputs = embedding_inputs_of(request);
  if (inputs.empty()) return error_reply(400, "input must be a non-empty array of strings");
  std::vector<std::vector<double>> vectors;
  for (const auto& text : inputs) vectors.push_back(embed(text));
  return embeddings_reply(vectors);
}

ModelRouter standard_router(const Manifest& pool, const std::vector<DatasetFamily>& families,
                            const StandardMockOptions& options) {
  ModelRouter router;
  router.add(std::string(kTeacherModel), CaptionModel(pool, families, options.teacher));
  router.add(std::string(kBaseModel), CaptionModel(pool, families, options.base));
  router.add(std::string(kTunedModel), CaptionModel(pool, families, options.tuned));
  router.add(std::string(kJudgeModel), HeuristicJudge());
  router.add(std::string(kEmbedderModel), HashingEmbedder());
  return router;
}

}  // namespace medcap::mock
