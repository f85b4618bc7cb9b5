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

#include "medcap/modelio/client.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <ctime>
#include <nlohmann/json.hpp>

#include "medcap/errors.hpp"
#include "medcap/util.hpp"

namespace medcap::modelio {

using nlohmann::json;

void EndpointConfig::validate() const {
  if (name.empty()) throw ConfigError("endpoint without a name");
  if (!base_url.starts_with("http://") && !base_url.starts_with("https://")) {
    throw ConfigError("endpoint '" + name + "': base_url must be http(s)");
  }
  if (model_name.empty()) throw ConfigError("endpoint '" + name + "': model_name is required");
  if (max_concurrent_requests < 1) {
    throw ConfigError("endpoint '" + name + "': max_concurrent_requests must be >= 1");
  }
  if (requests_per_minute < 1) {
    throw ConfigError("endpoint '" + name + "': requests_per_minute must be >= 1");
  }
  if (timeout.count() <= 0) throw ConfigError("endpoint '" + name + "': timeout must be > 0");
  if (max_retries < 0) throw ConfigError("endpoint '" + name + "': max_retries must be >= 0");
  if (max_tokens < 1) throw ConfigError("endpoint '" + name + "': max_tokens must be >= 1");
}

json to_json(const EndpointConfig& c) {
  return {{"name", c.name},
          {"base_url", c.base_url},
          {"api_key_env_var", c.api_key_env_var},
          {"model_name", c.model_name},
          {"max_concurrent_requests", c.max_concurrent_requests},
          {"requests_per_minute", c.requests_per_minute},
          {"timeout_seconds", static_cast<double>(c.timeout.count()) / 1000.0},
          {"max_retries", c.max_retries},
          {"temperature", c.temperature},
          {"max_tokens", c.max_tokens}};
}

EndpointConfig endpoint_config_from_json(const json& j) {
  try {
    EndpointConfig c;
    c.name = j.at("name").get<std::string>();
    c.base_url = j.at("base_url").get<std::string>();
    c.api_key_env_var = j.value("api_key_env_var", "");
    c.model_name = j.at("model_name").get<std::string>();
    c.max_concurrent_requests = j.value("max_concurrent_requests", c.max_concurrent_requests);
    c.requests_per_minute = j.value("requests_per_minute", c.requests_per_minute);
    c.timeout = std::chrono::milliseconds(
        static_cast<long long>(std::llround(j.value("timeout_seconds", 60.0) * 1000.0)));
    c.max_retries = j.value("max_retries", c.max_retries);
    c.temperature = j.value("temperature", c.temperature);
    c.max_tokens = j.value("max_tokens", c.max_tokens);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad endpoint config: ") + e.what());
  }
}

std::string_view mime_type(MediaType type) {
  return type == MediaType::kJpeg ? "image/jpeg" : "image/png";
}

std::string EncodedImage::data_url() const {
  return "data:" + std::string(mime_type(media_type)) + ";base64," + base64_payload;
}

json build_chat_body(const EndpointConfig& endpoint, const ChatRequest& request) {
  json user_content;
  if (request.image) {
    user_content = json::array({
        {{"type", "text"}, {"text", request.user_text}},
        {{"type", "image_url"}, {"image_url", {{"url", request.image->data_url()}}}},
    });
  } else {
    user_content = request.user_text;
  }
  json body{{"model", endpoint.model_name},
            {"temperature", endpoint.temperature},
            {"max_tokens", endpoint.max_tokens},
            {"messages",
             json::array({{{"role", "system"}, {"content", request.system_prompt}},
                          {{"role", "user"}, {"content", std::move(user_content)}}})}};
  if (request.response_format_json) body["response_format"] = {{"type", "json_object"}};
  return body;
}

json build_embeddings_body(const EndpointConfig& endpoint, const std::vector<std::string>& texts) {
  return {{"model", endpoint.model_name}, {"input", texts}};
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[40];
  std::snprintf(out, sizeof out, "%s.%03lldZ", buf, static_cast<long long>(ms));
  return out;
}

// Returns an error message when a 2xx body does not have the expected shape.
std::string check_body(const std::string& kind, const json& body) {
  if (kind == "chat") {
    if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
      return "response has no choices";
    }
    const auto& message = body["choices"][0].value("message", json::object());
    if (!message.contains("content") || !message["content"].is_string()) {
      return "response message has no text content";
    }
    return {};
  }
  if (!body.contains("data") || !body["data"].is_array()) return "response has no data array";
  for (const auto& item : body["data"]) {
    if (!item.contains("embedding") || !item["embedding"].is_array()) {
      return "data item without embedding";
    }
  }
  return {};
}

}  // namespace

struct ModelClient::HttpResult {
  json body;
  int attempts = 0;
  std::chrono::milliseconds latency{0};
};

ModelClient::ModelClient(EndpointConfig config, std::shared_ptr<AuditLog> audit,
                         std::shared_ptr<Clock> clock, std::uint64_t jitter_seed)
    : config_(std::move(config)),
      audit_(audit ? std::move(audit) : std::make_shared<AuditLog>()),
      clock_(std::move(clock)),
      limiter_(static_cast<std::size_t>(config_.requests_per_minute), std::chrono::minutes(1),
               clock_),
      gate_(static_cast<std::size_t>(config_.max_concurrent_requests)),
      rng_(jitter_seed) {
  config_.validate();
  auto url = config_.base_url;
  while (url.ends_with('/')) url.pop_back();
  const auto scheme_end = url.find("://") + 3;
  const auto path_start = url.find('/', scheme_end);
  scheme_host_port_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  if (!config_.api_key_env_var.empty()) {
    const char* key = std::getenv(config_.api_key_env_var.c_str());
    if (key == nullptr) {
      throw ConfigError("endpoint '" + config_.name + "': environment variable " +
                        config_.api_key_env_var + " is not set");
    }
    api_key_ = key;
  }
}

std::chrono::milliseconds ModelClient::backoff_delay(int failed_attempt) {
  double jitter;
  {
    std::lock_guard lock(rng_mutex_);
    jitter = std::uniform_real_distribution<double>(0.0, 0.25)(rng_);
  }
  const double base_ms = 1000.0 * std::ldexp(1.0, failed_attempt - 1);
  return std::chrono::milliseconds(static_cast<long long>(base_ms * (1.0 + jitter)));
}

ModelClient::HttpResult ModelClient::post_with_retries(const std::string& path,
                                                       const std::string& body,
                                                       const std::string& kind,
                                                       const RequestTag& tag) {
  const auto request_hash = sha256_hex(body);
  const int total_attempts = 1 + config_.max_retries;
  const auto timeout_s = config_.timeout.count() / 1000;
  const auto timeout_us = (config_.timeout.count() % 1000) * 1000;
  std::string last_error;

  for (int attempt = 1; attempt <= total_attempts; ++attempt) {
    AuditRecord record;
    record.endpoint = config_.name;
    record.model = config_.model_name;
    record.kind = kind;
    record.purpose = tag.purpose;
    record.subject = tag.subject;
    record.reask = tag.reask;
    record.attempt = attempt;
    record.request_sha256 = request_hash;
    record.timestamp = utc_timestamp();

    httplib::Result res{nullptr, httplib::Error::Unknown};
    std::chrono::milliseconds latency{0};
    {
      ConcurrencyGate::Slot slot(gate_);
      limiter_.acquire();
      httplib::Client http(scheme_host_port_);
      http.set_connection_timeout(timeout_s, timeout_us);
      http.set_read_timeout(timeout_s, timeout_us);
      http.set_write_timeout(timeout_s, timeout_us);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      const auto start = std::chrono::steady_clock::now();
      res = http.Post(path_prefix_ + path, headers, body, "application/json");
      latency = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start);
    }
    record.latency_ms = latency.count();

    if (!res) {
      record.outcome = "retryable";
      record.error = httplib::to_string(res.error());
    } else {
      record.http_status = res->status;
      record.response = res->body;
      if (res->status >= 200 && res->status < 300) {
        auto parsed = json::parse(res->body, nullptr, false);
        std::string problem =
            parsed.is_discarded() ? std::string("response body is not JSON") : check_body(kind, parsed);
        if (problem.empty()) {
          if (parsed.contains("usage") && parsed["usage"].is_object()) {
            record.prompt_tokens = parsed["usage"].value("prompt_tokens", std::int64_t{0});
            record.completion_tokens = parsed["usage"].value("completion_tokens", std::int64_t{0});
          }
          record.outcome = "ok";
          audit_->append(std::move(record));
          return HttpResult{std::move(parsed), attempt, latency};
        }
        record.outcome = "retryable";
        record.error = problem;
      } else if (res->status == 429 || res->status >= 500) {
        record.outcome = "retryable";
        record.error = "HTTP " + std::to_string(res->status);
      } else {
        record.outcome = "rejected";
        record.error = "HTTP " + std::to_string(res->status);
        const int status = res->status;
        audit_->append(std::move(record));
        throw EndpointRejected("endpoint '" + config_.name + "' rejected request with HTTP " +
                                   std::to_string(status),
                               status);
      }
    }
    last_error = record.error;
    audit_->append(std::move(record));
    spdlog::debug("{} attempt {}/{} failed: {}", config_.name, attempt, total_attempts, last_error);
    if (attempt < total_attempts) clock_->sleep_for(backoff_delay(attempt));
  }
  throw EndpointExhausted("endpoint '" + config_.name + "' failed after " +
                          std::to_string(total_attempts) + " attempts: " + last_error);
}

ChatResponse ModelClient::chat_complete(const ChatRequest& request, const RequestTag& tag) {
  const auto body = build_chat_body(config_, request).dump();
  auto result = post_with_retries("/chat/completions", body, "chat", tag);
  ChatResponse response;
  response.text = result.body["choices"][0]["message"]["content"].get<std::string>();
  if (result.body.contains("usage") && result.body["usage"].is_object()) {
    response.prompt_tokens = result.body["usage"].value("prompt_tokens", std::int64_t{0});
    response.completion_tokens = result.body["usage"].value("completion_tokens", std::int64_t{0});
  }
  response.latency = result.latency;
  response.endpoint = config_.name;
  response.attempts = result.attempts;
  return response;
}

std::vector<std::vector<double>> ModelClient::embed(const std::vector<std::string>& texts,
                                                    const RequestTag& tag) {
  if (texts.empty()) throw InputError("embed: no texts");
  for (const auto& t : texts) {
    if (trim(t).empty()) throw InputError("embed: empty text in batch");
  }
  const auto body = build_embeddings_body(config_, texts).dump();
  auto result = post_with_retries("/embeddings", body, "embeddings", tag);

  const auto& data = result.body["data"];
  if (data.size() != texts.size()) {
    throw EndpointRejected("endpoint '" + config_.name + "' returned " +
                               std::to_string(data.size()) + " embeddings for " +
                               std::to_string(texts.size()) + " inputs",
                           200);
  }
  std::vector<std::vector<double>> vectors(texts.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto index = data[i].value("index", i);
    if (index >= vectors.size()) throw EndpointRejected("embedding index out of range", 200);
    vectors[index] = data[i]["embedding"].get<std::vector<double>>();
  }
  const auto dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.empty() || v.size() != dim) {
      throw EndpointRejected("inconsistent embedding dimensionality", 200);
    }
  }
  return vectors;
}

}  // namespace medcap::modelio
