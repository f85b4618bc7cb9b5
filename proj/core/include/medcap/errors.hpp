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

#include <stdexcept>
#include <string>
#include <string_view>

namespace medcap {

/// Coarse failure category. The CLI maps each category to an exit code.
enum class ErrorCategory {
  kInput,
  kConfig,
  kIo,
  kParse,
  kEndpoint,
  kStageDependency,
  kMetric,
  kInterrupted,
};

std::string_view to_string(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class MalformedLabel : public Error {
 public:
  explicit MalformedLabel(const std::string& raw)
      : Error(ErrorCategory::kInput, "malformed label: '" + raw + "'") {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(ErrorCategory::kInput, what) {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what) : Error(ErrorCategory::kInput, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::kConfig, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::kIo, what) {}
};

/// Carries the raw model text so failed parses can be audited.
class ParseFailure : public Error {
 public:
  ParseFailure(const std::string& what, std::string raw)
      : Error(ErrorCategory::kParse, what), raw_(std::move(raw)) {}

  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class SchemaViolation : public ParseFailure {
 public:
  SchemaViolation(std::string field, std::string raw)
      : ParseFailure("schema violation: " + field, std::move(raw)), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ImageDecodeError : public Error {
 public:
  explicit ImageDecodeError(const std::string& what) : Error(ErrorCategory::kInput, what) {}
};

class EndpointError : public Error {
 public:
  using Error::Error;
};

/// Retries used up on a retryable failure (transport error, 429, 5xx).
class EndpointExhausted : public EndpointError {
 public:
  explicit EndpointExhausted(const std::string& what)
      : EndpointError(ErrorCategory::kEndpoint, what) {}
};

/// Non-retryable 4xx from the endpoint.
class EndpointRejected : public EndpointError {
 public:
  EndpointRejected(const std::string& what, int status)
      : EndpointError(ErrorCategory::kEndpoint, what), status_(status) {}

  int status() const noexcept { return status_; }

 private:
  int status_;
};

class MetricUnavailable : public Error {
 public:
  MetricUnavailable(std::string metric, const std::string& why)
      : Error(ErrorCategory::kMetric, metric + " unavailable: " + why), metric_(std::move(metric)) {}

  const std::string& metric() const noexcept { return metric_; }

 private:
  std::string metric_;
};

class StageDependencyError : public Error {
 public:
  explicit StageDependencyError(const std::string& missing)
      : Error(ErrorCategory::kStageDependency, "missing predecessor artifact: " + missing),
        missing_(missing) {}

  const std::string& missing() const noexcept { return missing_; }

 private:
  std::string missing_;
};

/// Raised when a long-running loop is stopped before completion.
class Interrupted : public Error {
 public:
  explicit Interrupted(const std::string& what) : Error(ErrorCategory::kInterrupted, what) {}
};

}  // namespace medcap
