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

#include "test_support.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <random>
#include <set>
#include <stdexcept>

#include "medcap/util.hpp"

namespace medcap::testing {

namespace fs = std::filesystem;
using nlohmann::json;

TempDir::TempDir() {
  std::random_device rd;
  const auto base = fs::temp_directory_path();
  for (int i = 0; i < 100; ++i) {
    auto candidate = base / ("medcap-test-" + std::to_string(rd()));
    if (fs::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_noise_image(const fs::path& path, std::uint64_t seed, int width, int height) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  cv::Mat image(height, width, CV_8UC3);
  std::mt19937_64 rng(seed);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      image.at<cv::Vec3b>(y, x) = {static_cast<uchar>(rng()), static_cast<uchar>(rng()),
                                   static_cast<uchar>(rng())};
    }
  }
  if (!cv::imwrite(path.string(), image)) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

modelio::Clock::time_point FakeClock::now() {
  std::lock_guard lock(mutex_);
  return now_;
}

void FakeClock::sleep_until(time_point deadline) {
  std::lock_guard lock(mutex_);
  if (deadline > now_) {
    sleeps_.push_back(deadline - now_);
    now_ = deadline;
  } else {
    sleeps_.push_back(duration::zero());
  }
}

std::vector<modelio::Clock::duration> FakeClock::sleeps() const {
  std::lock_guard lock(mutex_);
  return sleeps_;
}

modelio::Clock::duration FakeClock::elapsed() const {
  std::lock_guard lock(mutex_);
  return now_ - start_;
}

Manifest make_pool(const fs::path& dir, const DatasetFamily& family,
                   const std::map<std::string, int>& per_class, std::uint64_t seed) {
  Manifest pool;
  const auto ds = std::string(to_string(family.id));
  std::uint64_t n = 0;
  for (const auto& name : family.canonical_names()) {
    auto it = per_class.find(name);
    if (it == per_class.end()) continue;
    for (int i = 0; i < it->second; ++i) {
      ImageRecord r;
      r.image_id = ds + "-" + std::to_string(1000 + n);
      r.image_path = dir / ds / (r.image_id + ".png");
      r.dataset = family.id;
      r.ground_truth = family.canonicalize(name);
      write_noise_image(r.image_path, seed * 1000003 + n + std::hash<std::string>{}(ds));
      pool.push_back(std::move(r));
      ++n;
    }
  }
  return pool;
}

std::vector<distill::CorpusEntry> synthetic_corpus(const DatasetFamily& family,
                                                   const std::map<std::string, int>& per_class) {
  std::vector<distill::CorpusEntry> out;
  const auto ds = std::string(to_string(family.id));
  int n = 0;
  for (const auto& [name, count] : per_class) {
    for (int i = 0; i < count; ++i) {
      distill::CorpusEntry e;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%05d", ds.c_str(), n++);
      e.record.image_id = id;
      e.record.image_path = "images/" + e.record.image_id + ".png";
      e.record.dataset = family.id;
      e.record.ground_truth = family.canonicalize(name);
      e.caption.prediction = e.record.ground_truth;
      e.caption.description = {"Photograph.", "Region.", "Findings of " + name + ".",
                               "Consistent with " + name + "."};
      out.push_back(std::move(e));
    }
  }
  return out;
}

modelio::EndpointConfig mock_endpoint(const std::string& name, const std::string& base_url,
                                      const std::string& model, int concurrency) {
  modelio::EndpointConfig c;
  c.name = name;
  c.base_url = base_url;
  c.model_name = model;
  c.max_concurrent_requests = concurrency;
  c.requests_per_minute = 1000000;
  c.timeout = std::chrono::milliseconds(10000);
  c.max_retries = 2;
  return c;
}

std::optional<std::vector<std::uint8_t>> oracle_base64_decode(std::string_view text) {
  static constexpr std::string_view kAlphabet =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  if (text.size() % 4 != 0) return std::nullopt;
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t block = 0;
    int pad = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      const char c = text[i + j];
      std::uint32_t v = 0;
      if (c == '=') {
        if (i + 4 != text.size() || j < 2) return std::nullopt;
        ++pad;
      } else {
        if (pad > 0) return std::nullopt;
        const auto pos = kAlphabet.find(c);
        if (pos == std::string_view::npos) return std::nullopt;
        v = static_cast<std::uint32_t>(pos);
      }
      block = (block << 6) | v;
    }
    out.push_back(static_cast<std::uint8_t>(block >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((block >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(block & 0xff));
  }
  return out;
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where,
                std::vector<std::string>& out) {
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) out.push_back(where + ": unexpected key '" + k + "'");
  }
}

void check_data_url(const std::string& url, std::vector<std::string>& out) {
  for (const std::string prefix : {"data:image/jpeg;base64,", "data:image/png;base64,"}) {
    if (url.rfind(prefix, 0) == 0) {
      if (!oracle_base64_decode(std::string_view(url).substr(prefix.size()))) {
        out.push_back("image_url: payload is not valid base64");
      }
      return;
    }
  }
  out.push_back("image_url: not a jpeg/png base64 data URL");
}

}  // namespace

std::vector<std::string> chat_request_violations(const json& body) {
  std::vector<std::string> out;
  if (!body.is_object()) return {"body is not an object"};
  check_keys(body, {"model", "messages", "temperature", "max_tokens", "response_format"}, "body",
             out);
  if (!body.contains("model") || !body["model"].is_string() ||
      body["model"].get<std::string>().empty()) {
    out.push_back("model must be a non-empty string");
  }
  if (body.contains("temperature") &&
      (!body["temperature"].is_number() || body["temperature"].get<double>() < 0.0 ||
       body["temperature"].get<double>() > 2.0)) {
    out.push_back("temperature must be a number in [0, 2]");
  }
  if (body.contains("max_tokens") &&
      (!body["max_tokens"].is_number_integer() || body["max_tokens"].get<long long>() < 1)) {
    out.push_back("max_tokens must be a positive integer");
  }
  if (body.contains("response_format") &&
      body["response_format"] != json{{"type", "json_object"}}) {
    out.push_back("response_format must be {\"type\":\"json_object\"}");
  }
  if (!body.contains("messages") || !body["messages"].is_array() || body["messages"].empty()) {
    out.push_back("messages must be a non-empty array");
    return out;
  }
  bool has_user = false;
  for (const auto& m : body["messages"]) {
    if (!m.is_object()) {
      out.push_back("message is not an object");
      continue;
    }
    check_keys(m, {"role", "content"}, "message", out);
    const auto role = m.value("role", "");
    if (role != "system" && role != "user" && role != "assistant") {
      out.push_back("message role '" + role + "' is not valid");
    }
    if (!m.contains("content")) {
      out.push_back("message without content");
      continue;
    }
    const auto& content = m["content"];
    if (role == "user") has_user = true;
    if (content.is_string()) continue;
    if (role != "user" || !content.is_array() || content.empty()) {
      out.push_back("content must be a string, or an array of parts in a user message");
      continue;
    }
    for (const auto& part : content) {
      const auto type = part.is_object() ? part.value("type", "") : std::string();
      if (type == "text") {
        check_keys(part, {"type", "text"}, "text part", out);
        if (!part.contains("text") || !part["text"].is_string()) out.push_back("text part without text");
      } else if (type == "image_url") {
        check_keys(part, {"type", "image_url"}, "image part", out);
        if (!part.contains("image_url") || !part["image_url"].is_object() ||
            !part["image_url"].contains("url") || !part["image_url"]["url"].is_string()) {
          out.push_back("image part without image_url.url");
        } else {
          check_data_url(part["image_url"]["url"].get<std::string>(), out);
        }
      } else {
        out.push_back("unknown content part type '" + type + "'");
      }
    }
  }
  if (!has_user) out.push_back("no user message");
  return out;
}

std::vector<std::string> embeddings_request_violations(const json& body) {
  std::vector<std::string> out;
  if (!body.is_object()) return {"body is not an object"};
  check_keys(body, {"model", "input"}, "body", out);
  if (!body.contains("model") || !body["model"].is_string() ||
      body["model"].get<std::string>().empty()) {
    out.push_back("model must be a non-empty string");
  }
  if (!body.contains("input") || !body["input"].is_array() || body["input"].empty()) {
    out.push_back("input must be a non-empty array");
    return out;
  }
  for (const auto& s : body["input"]) {
    if (!s.is_string() || s.get<std::string>().empty()) {
      out.push_back("input entries must be non-empty strings");
    }
  }
  return out;
}

OracleMetrics oracle_metrics(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  OracleMetrics m;
  const auto n = truth.size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) correct += truth[i] == pred[i] ? 1 : 0;
  m.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  double sp = 0.0, sr = 0.0, sf = 0.0;
  int classes = 0;
  for (int c = 0; c < k; ++c) {
    double tp = 0, fp = 0, fn = 0, support = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (truth[i] == c) ++support;
      if (truth[i] == c && pred[i] == c) ++tp;
      if (truth[i] != c && pred[i] == c) ++fp;
      if (truth[i] == c && pred[i] != c) ++fn;
    }
    if (support == 0) continue;
    ++classes;
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    sp += p;
    sr += r;
    sf += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  if (classes > 0) {
    m.macro_precision = sp / classes;
    m.macro_recall = sr / classes;
    m.macro_f1 = sf / classes;
    m.balanced_accuracy = m.macro_recall;
  }
  return m;
}

const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows{
      {"fundus", "Fundus", 50, "Base", {"0.5200", "0.5368", "0.6755", "0.5368"},
       {"0.2996", "0.4426", "0.4136"}},
      {"fundus", "Fundus", 50, "Fine-Tuned", {"0.6200", "0.6674", "0.6675", "0.6674"},
       {"0.5662", "0.4533", "0.6213"}},
      {"dermatology", "Dermatology", 68, "Base", {"0.0882", "0.0813", "0.0687", "0.0711"},
       {"0.3166", "0.3800", "0.2836"}},
      {"dermatology", "Dermatology", 68, "Fine-Tuned", {"0.4265", "0.4870", "0.4546", "0.4870"},
       {"0.4467", "0.4833", "0.5605"}},
      {"chest_xray", "Chest-Xray", 50, "Base", {"0.4200", "0.4908", "0.6650", "0.4908"},
       {"0.3970", "0.4890", "0.4643"}},
      {"chest_xray", "Chest-Xray", 50, "Fine-Tuned", {"0.5200", "0.5558", "0.5757", "0.5558"},
       {"0.5331", "0.5563", "0.5774"}},
  };
  return rows;
}

report::ComparisonReport reference_report() {
  report::ComparisonReport out;
  for (const auto& row : reference_rows()) {
    if (out.datasets.empty() || out.datasets.back().dataset != row.dataset) {
      report::DatasetBlock block;
      block.dataset = row.dataset;
      block.display_name = row.display_name;
      block.n = row.n;
      out.datasets.push_back(block);
    }
    auto& block = out.datasets.back();
    const auto num = [](const std::string& s) { return std::stod(s); };
    block.classification.push_back({row.model, num(row.classification[0]),
                                    num(row.classification[2]), num(row.classification[1]),
                                    num(row.classification[2]), num(row.classification[3]), 0});
    block.caption.push_back(
        {row.model, num(row.caption[0]), num(row.caption[1]), num(row.caption[2])});
  }
  out.metadata.seed = 42;
  out.metadata.config_hash = std::string(64, '0');
  out.metadata.endpoints = {{"base", "base / mock-base"}, {"fine-tuned", "tuned / mock-tuned"}};
  report::compute_deltas(out);
  return out;
}

}  // namespace medcap::testing
