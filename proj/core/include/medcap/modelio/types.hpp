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

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json_fwd.hpp>

namespace medcap::modelio {

struct EndpointConfig {
  std::string name;
  /// Including any path prefix, e.g. "https://api.example.com/v1".
  std::string base_url;
  /// Empty means no Authorization header is sent.
  std::string api_key_env_var;
  std::string model_name;
  int max_concurrent_requests = 4;
  int requests_per_minute = 60;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  double temperature = 0.0;
  int max_tokens = 1024;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

nlohmann::json to_json(const EndpointConfig& config);
EndpointConfig endpoint_config_from_json(const nlohmann::json& j);

enum class MediaType { kJpeg, kPng };

std::string_view mime_type(MediaType type);

struct EncodedImage {
  MediaType media_type = MediaType::kJpeg;
  std::string base64_payload;
  std::string source_sha256;
  std::optional<std::pair<int, int>> resized_to;

  std::string data_url() const;
};

struct ChatRequest {
  std::string system_prompt;
  std::string user_text;
  std::optional<EncodedImage> image;
  bool response_format_json = false;
};

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::chrono::milliseconds latency{0};
  std::string endpoint;
  /// Network attempts spent, including the successful one.
  int attempts = 1;
};

/// Identifies the logical operation a request belongs to in the audit log.
struct RequestTag {
  std::string purpose;
  std::string subject;
  int reask = 0;
};

}  // namespace medcap::modelio
