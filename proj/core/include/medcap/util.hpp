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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace medcap {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view text);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws InputError on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
std::string read_file_text(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string trim(std::string_view text);

/// First balanced JSON value opening with `open` ('{' or '[') that parses,
/// skipping surrounding prose and code fences. String literals are honored
/// when matching brackets.
std::optional<nlohmann::json> find_json(std::string_view text, char open);

/// Thread-safe line-oriented JSON appender. Every line is flushed so a
/// killed process leaves at most one truncated trailing record.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path, bool truncate = false);

  void append(const nlohmann::json& record);
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
  std::ofstream out_;
};

struct JsonlReadResult {
  std::vector<nlohmann::json> records;
  std::size_t skipped_lines = 0;
};

/// Reads newline-delimited JSON. With `tolerate_bad_lines`, unparseable
/// lines (e.g. a record cut short by a crash) are counted and skipped;
/// otherwise they raise InputError.
JsonlReadResult read_jsonl(const std::filesystem::path& path, bool tolerate_bad_lines = false);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);

}  // namespace medcap
