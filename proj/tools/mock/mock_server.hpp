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

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace medcap::mock {

/// One request as the mock endpoint saw it.
struct MockRequest {
  std::string path;
  nlohmann::json body;
  std::string authorization;
  std::string raw_body;
};

struct MockReply {
  int status = 200;
  std::string body;
  /// Simulated service time, spent before the reply is sent.
  std::chrono::milliseconds delay{0};
};

using MockHandler = std::function<MockReply(const MockRequest&)>;

MockReply chat_reply(const std::string& content, int prompt_tokens = 32,
                     int completion_tokens = 64);
MockReply embeddings_reply(const std::vector<std::vector<double>>& vectors);
MockReply error_reply(int status, const std::string& message);

/// Request accessors for the chat-completions shape. They return empty
/// values when the field is missing.
std::string system_prompt_of(const MockRequest& request);
std::string user_text_of(const MockRequest& request);
std::optional<std::vector<std::uint8_t>> image_bytes_of(const MockRequest& request);
std::vector<std::string> embedding_inputs_of(const MockRequest& request);

/// HTTP server on 127.0.0.1, serving every POST with
/// `handler`. Requests are captured and concurrent handlers are counted.
/// Port 0 picks a free port.
class MockServer {
 public:
  explicit MockServer(MockHandler handler, std::size_t threads = 32, int port = 0);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  int port() const noexcept { return port_; }
  /// "http://127.0.0.1:<port>/v1"
  std::string base_url() const;

  void set_handler(MockHandler handler);
  std::vector<MockRequest> requests() const;
  std::size_t request_count() const;
  std::size_t peak_in_flight() const noexcept { return peak_.load(); }
  void reset_counters();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  MockHandler handler_;
  std::vector<MockRequest> requests_;
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_{0};
};

/// Dispatches on the request's "model" field; unknown models get 404.
class ModelRouter {
 public:
  void add(const std::string& model, MockHandler handler);
  MockReply operator()(const MockRequest& request) const;

 private:
  std::map<std::string, MockHandler> routes_;
};

}  // namespace medcap::mock
