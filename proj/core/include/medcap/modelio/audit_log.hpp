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
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medcap/util.hpp"

namespace medcap::modelio {

/// One network attempt. Failed attempts are recorded too.
struct AuditRecord {
  std::string endpoint;
  std::string model;
  std::string kind;  // "chat" or "embeddings"
  std::string purpose;
  std::string subject;
  int reask = 0;
  int attempt = 1;
  std::string request_sha256;
  int http_status = 0;
  std::string outcome;  // "ok", "retryable", "rejected"
  std::string error;
  std::string response;
  std::int64_t latency_ms = 0;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::string timestamp;
};

nlohmann::json to_json(const AuditRecord& record);
AuditRecord audit_record_from_json(const nlohmann::json& j);

/// Serialized writer for audit records. A log without a path keeps records
/// in memory only.
class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(const std::filesystem::path& path);

  void append(AuditRecord record);

  /// Records appended through this instance (in-memory copy).
  std::vector<AuditRecord> records() const;
  std::size_t size() const;

 private:
  std::unique_ptr<JsonlWriter> writer_;
  mutable std::mutex mutex_;
  std::vector<AuditRecord> records_;
};

std::vector<AuditRecord> read_audit_log(const std::filesystem::path& path);

}  // namespace medcap::modelio
