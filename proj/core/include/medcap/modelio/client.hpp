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

#include <cstdint>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "medcap/modelio/audit_log.hpp"
#include "medcap/modelio/clock.hpp"
#include "medcap/modelio/types.hpp"

namespace medcap::modelio {

/// Request body for POST {base_url}/chat/completions.
nlohmann::json build_chat_body(const EndpointConfig& endpoint, const ChatRequest& request);
/// Request body for POST {base_url}/embeddings.
nlohmann::json build_embeddings_body(const EndpointConfig& endpoint,
                                     const std::vector<std::string>& texts);

/// Client for one OpenAI-compatible endpoint. Safe to share across threads:
/// the rate limiter and concurrency gate are internal, and audit records go
/// through the shared AuditLog.
///
/// Retries transport errors, timeouts, HTTP 429 and 5xx with exponential
/// backoff (1 s base, factor 2, up to 25% jitter). Other 4xx responses are
/// not retried.
class ModelClient {
 public:
  ModelClient(EndpointConfig config, std::shared_ptr<AuditLog> audit,
              std::shared_ptr<Clock> clock = system_clock(), std::uint64_t jitter_seed = 0);

  ChatResponse chat_complete(const ChatRequest& request, const RequestTag& tag = {});

  /// One vector per input text, in input order. Empty texts raise InputError
  /// before any request is sent.
  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts,
                                         const RequestTag& tag = {});

  const EndpointConfig& config() const noexcept { return config_; }
  std::size_t peak_in_flight() const { return gate_.peak(); }

 private:
  struct HttpResult;
  HttpResult post_with_retries(const std::string& path, const std::string& body,
                               const std::string& kind, const RequestTag& tag);
  std::chrono::milliseconds backoff_delay(int failed_attempt);

  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string api_key_;
  std::shared_ptr<AuditLog> audit_;
  std::shared_ptr<Clock> clock_;
  RateLimiter limiter_;
  ConcurrencyGate gate_;
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

}  // namespace medcap::modelio
