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

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "medcap/modelio/client.hpp"

namespace medcap::cli {

/// Exclusive handle on a run directory, held through an advisory file lock
/// that the OS releases if the process dies.
class RunDirectory {
 public:
  /// Creates the directory if needed. Throws IoError when another process
  /// holds the lock.
  explicit RunDirectory(std::filesystem::path root);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path at(std::string_view relative) const { return root_ / relative; }

 private:
  std::filesystem::path root_;
  int lock_fd_ = -1;
};

/// Written to stages/<name>.json after a stage completes.
struct StageRecord {
  std::string stage;
  std::string fingerprint;
  /// Paths relative to the run directory when inside it.
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  std::string started_at;
  std::string finished_at;
};

nlohmann::json to_json(const StageRecord& record);
StageRecord stage_record_from_json(const nlohmann::json& j);

struct StageContext {
  std::string fingerprint;
  bool force = false;
};

struct StageSpec {
  std::string name;
  /// Files or directories that must exist before the stage runs.
  std::vector<std::filesystem::path> inputs;
  /// The configuration slice the stage depends on.
  nlohmann::json config;
  /// Returns the files produced.
  std::function<std::vector<std::filesystem::path>(const StageContext&)> run;
};

enum class StageOutcome { kRan, kSkipped };

/// Short-circuits when the last record has the same fingerprint (config
/// slice plus input hashes) and every recorded output still hashes the same.
/// Throws StageDependencyError naming the first missing input.
StageOutcome run_stage(RunDirectory& dir, const StageSpec& spec, bool force);

/// SHA-256 of a file, or of a directory listing (names, sizes, mtimes).
std::string fingerprint_path(const std::filesystem::path& path);

/// Model clients sharing one audit log per endpoint under audit/.
class ClientRegistry {
 public:
  ClientRegistry(const RunConfig& config, const RunDirectory& dir);
  modelio::ModelClient& get(const std::string& endpoint);

 private:
  const RunConfig& config_;
  const RunDirectory& dir_;
  std::map<std::string, std::unique_ptr<modelio::ModelClient>> clients_;
};

/// One request against `endpoint` (chat, or embeddings when `embeddings`).
/// Failures propagate as EndpointError.
void health_check(modelio::ModelClient& client, bool embeddings);

/// Set by the SIGINT/SIGTERM handler; stages stop cooperatively.
bool stop_requested();
void install_signal_handlers();

/// Builds the spec for a named stage.
StageSpec make_stage(std::string_view name, const RunConfig& config, RunDirectory& dir,
                     ClientRegistry& clients);

}  // namespace medcap::cli
