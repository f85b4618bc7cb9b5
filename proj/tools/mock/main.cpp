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

// Standalone mock of every endpoint role, for demos and manual runs against
// a run directory that has already been ingested.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <iostream>

#include "../cli/config.hpp"
#include "medcap/errors.hpp"
#include "mock_models.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Deterministic mock of the teacher, candidate, judge and embedder endpoints",
               "medcap-mock"};
  std::string config_path;
  std::string manifest_path;
  int port = 8080;
  medcap::mock::StandardMockOptions options;
  app.add_option("--config", config_path, "Run configuration (for dataset vocabularies)")
      ->required();
  app.add_option("--manifest", manifest_path, "Image manifest written by `medcap ingest`")
      ->required();
  app.add_option("--port", port, "Port on 127.0.0.1 (0 picks a free one)");
  app.add_option("--teacher-error-rate", options.teacher.error_rate);
  app.add_option("--base-error-rate", options.base.error_rate);
  app.add_option("--tuned-error-rate", options.tuned.error_rate);
  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = medcap::cli::load_config(config_path);
    const auto pool = medcap::read_manifest(manifest_path);
    // Block the stop signals before the server threads start so they are
    // delivered to sigwait below.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    medcap::mock::MockServer server(
        medcap::mock::standard_router(pool, config.families(), options), 32, port);
    std::cout << server.base_url() << std::endl;
    spdlog::info("serving {} images; models {}, {}, {}, {}, {}", pool.size(),
                 medcap::mock::kTeacherModel, medcap::mock::kBaseModel, medcap::mock::kTunedModel,
                 medcap::mock::kJudgeModel, medcap::mock::kEmbedderModel);
    int received = 0;
    sigwait(&signals, &received);
    spdlog::info("stopping after {} request(s)", server.request_count());
    return 0;
  } catch (const medcap::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
