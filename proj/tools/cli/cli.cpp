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

#include "cli.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <string>
#include <vector>

#include "config.hpp"
#include "pipeline.hpp"

namespace medcap::cli {

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInput: return 3;
    case ErrorCategory::kConfig: return 4;
    case ErrorCategory::kIo: return 5;
    case ErrorCategory::kParse: return 6;
    case ErrorCategory::kEndpoint: return 7;
    case ErrorCategory::kStageDependency: return 8;
    case ErrorCategory::kMetric: return 9;
    case ErrorCategory::kInterrupted: return 130;
  }
  return 1;
}

namespace {

struct Stage {
  const char* name;
  const char* description;
};

constexpr Stage kStages[] = {
    {"ingest", "Read dataset label files into a validated image manifest"},
    {"distill", "Generate teacher captions, keep correct ones, fill per-class quotas"},
    {"split", "Stratified train/validation/test split of the retained corpus"},
    {"emit-corpus", "Write the instruction-formatted training corpus"},
    {"predict", "Run candidate models on the test split"},
    {"eval-cls", "Classification concordance of candidate predictions"},
    {"eval-rag", "Caption faithfulness, relevancy and correctness"},
    {"report", "Render the comparison report"},
};

// Endpoints a stage talks to; their clients are built (and API keys checked)
// before the first request of the run.
std::vector<std::string> endpoints_for(std::string_view stage, const RunConfig& config) {
  std::vector<std::string> out;
  if (stage == "distill") out.push_back(config.teacher);
  if (stage == "predict") {
    for (const auto& c : config.candidates) out.push_back(c.endpoint);
  }
  if (stage == "eval-rag") {
    if (!config.judge.empty()) out.push_back(config.judge);
    if (!config.embedder.empty()) out.push_back(config.embedder);
  }
  return out;
}

void configure_logging(const std::string& level) {
  auto logger = std::make_shared<spdlog::logger>(
      "medcap", std::make_shared<spdlog::sinks::stderr_color_sink_mt>());
  logger->set_level(spdlog::level::from_str(level));
  spdlog::set_default_logger(std::move(logger));
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Distillation corpus builder and captioning evaluation pipeline", "medcap"};
  app.require_subcommand(1, 1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  std::string config_path;
  std::string run_dir;
  bool force = false;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run configuration (JSON)")->required();
    sub->add_option("--run-dir", run_dir, "Run directory (overrides run_dir in the config)");
    sub->add_flag("--force", force, "Rerun even when inputs are unchanged");
  };
  for (const auto& s : kStages) add_common(app.add_subcommand(s.name, s.description));
  add_common(app.add_subcommand("run-all", "Run every stage in order"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  configure_logging(log_level);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    const auto config = load_config(config_path);
    std::filesystem::path root;
    if (!run_dir.empty()) {
      root = run_dir;
    } else if (config.run_dir) {
      root = *config.run_dir;
    } else {
      throw ConfigError("no run directory: pass --run-dir or set run_dir in the config");
    }
    RunDirectory dir(root);
    ClientRegistry clients(config, dir);

    std::vector<std::string> stages;
    if (command == "run-all") {
      for (const auto& s : kStages) stages.emplace_back(s.name);
    } else {
      stages.push_back(command);
    }
    for (const auto& stage : stages) {
      for (const auto& endpoint : endpoints_for(stage, config)) clients.get(endpoint);
    }
    install_signal_handlers();
    for (const auto& stage : stages) {
      run_stage(dir, make_stage(stage, config, dir, clients), force);
    }
    return 0;
  } catch (const Error& e) {
    spdlog::error("{} error: {}", to_string(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::exception& e) {
    spdlog::error("unexpected error: {}", e.what());
    return 1;
  }
}

}  // namespace medcap::cli
