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

#include "medcap/modelio/audit_log.hpp"

#include "medcap/errors.hpp"

namespace medcap::modelio {

nlohmann::json to_json(const AuditRecord& r) {
  return {{"timestamp", r.timestamp},
          {"endpoint", r.endpoint},
          {"model", r.model},
          {"kind", r.kind},
          {"purpose", r.purpose},
          {"subject", r.subject},
          {"reask", r.reask},
          {"attempt", r.attempt},
          {"request_sha256", r.request_sha256},
          {"http_status", r.http_status},
          {"outcome", r.outcome},
          {"error", r.error},
          {"response", r.response},
          {"latency_ms", r.latency_ms},
          {"prompt_tokens", r.prompt_tokens},
          {"completion_tokens", r.completion_tokens}};
}

AuditRecord audit_record_from_json(const nlohmann::json& j) {
  AuditRecord r;
  r.timestamp = j.value("timestamp", "");
  r.endpoint = j.value("endpoint", "");
  r.model = j.value("model", "");
  r.kind = j.value("kind", "");
  r.purpose = j.value("purpose", "");
  r.subject = j.value("subject", "");
  r.reask = j.value("reask", 0);
  r.attempt = j.value("attempt", 1);
  r.request_sha256 = j.value("request_sha256", "");
  r.http_status = j.value("http_status", 0);
  r.outcome = j.value("outcome", "");
  r.error = j.value("error", "");
  r.response = j.value("response", "");
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  r.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
  r.completion_tokens = j.value("completion_tokens", std::int64_t{0});
  return r;
}

AuditLog::AuditLog(const std::filesystem::path& path)
    : writer_(std::make_unique<JsonlWriter>(path)) {}

void AuditLog::append(AuditRecord record) {
  std::lock_guard lock(mutex_);
  if (writer_) writer_->append(to_json(record));
  records_.push_back(std::move(record));
}

std::vector<AuditRecord> AuditLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mutex_);
  return records_.size();
}

std::vector<AuditRecord> read_audit_log(const std::filesystem::path& path) {
  std::vector<AuditRecord> out;
  if (!std::filesystem::exists(path)) return out;
  for (const auto& j : read_jsonl(path, true).records) out.push_back(audit_record_from_json(j));
  return out;
}

}  // namespace medcap::modelio
