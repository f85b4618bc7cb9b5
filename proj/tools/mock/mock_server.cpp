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

#include "mock_server.hpp"

#include <httplib.h>

#include <stdexcept>

#include "medcap/util.hpp"

namespace medcap::mock {

using nlohmann::json;

MockReply chat_reply(const std::string& content, int prompt_tokens, int completion_tokens) {
  static std::atomic<std::uint64_t> counter{0};
  json body{{"id", "chatcmpl-mock-" + std::to_string(++counter)},
            {"object", "chat.completion"},
            {"choices", json::array({{{"index", 0},
                                      {"message", {{"role", "assistant"}, {"content", content}}},
                                      {"finish_reason", "stop"}}})},
            {"usage",
             {{"prompt_tokens", prompt_tokens},
              {"completion_tokens", completion_tokens},
              {"total_tokens", prompt_tokens + completion_tokens}}}};
  return {200, body.dump(), {}};
}

MockReply embeddings_reply(const std::vector<std::vector<double>>& vectors) {
  json data = json::array();
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    data.push_back({{"object", "embedding"}, {"index", i}, {"embedding", vectors[i]}});
  }
  json body{{"object", "list"},
            {"data", std::move(data)},
            {"usage", {{"prompt_tokens", 8}, {"total_tokens", 8}}}};
  return {200, body.dump(), {}};
}

MockReply error_reply(int status, const std::string& message) {
  json body{{"error", {{"message", message}, {"type", "mock_error"}}}};
  return {status, body.dump(), {}};
}

namespace {

const json* user_content(const MockRequest& request) {
  const auto& body = request.body;
  if (!body.is_object() || !body.contains("messages") || !body["messages"].is_array()) {
    return nullptr;
  }
  for (const auto& m : body["messages"]) {
    if (m.is_object() && m.value("role", "") == "user" && m.contains("content")) {
      return &m["content"];
    }
  }
  return nullptr;
}

}  // namespace

std::string system_prompt_of(const MockRequest& request) {
  const auto& body = request.body;
  if (!body.is_object() || !body.contains("messages") || !body["messages"].is_array()) return {};
  for (const auto& m : body["messages"]) {
    if (m.is_object() && m.value("role", "") == "system" && m.contains("content") &&
        m["content"].is_string()) {
      return m["content"].get<std::string>();
    }
  }
  return {};
}

std::string user_text_of(const MockRequest& request) {
  const json* content = user_content(request);
  if (content == nullptr) return {};
  if (content->is_string()) return content->get<std::string>();
  if (!content->is_array()) return {};
  for (const auto& part : *content) {
    if (part.is_object() && part.value("type", "") == "text" && part.contains("text")) {
      return part["text"].get<std::string>();
    }
  }
  return {};
}

std::optional<std::vector<std::uint8_t>> image_bytes_of(const MockRequest& request) {
  const json* content = user_content(request);
  if (content == nullptr || !content->is_array()) return std::nullopt;
  for (const auto& part : *content) {
    if (!part.is_object() || part.value("type", "") != "image_url") continue;
    const auto url = part.at("image_url").value("url", "");
    const auto comma = url.find(";base64,");
    if (comma == std::string::npos) return std::nullopt;
    try {
      return base64_decode(std::string_view(url).substr(comma + 8));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::vector<std::string> embedding_inputs_of(const MockRequest& request) {
  std::vector<std::string> out;
  const auto& body = request.body;
  if (!body.is_object() || !body.contains("input")) return out;
  const auto& input = body["input"];
  if (input.is_string()) {
    out.push_back(input.get<std::string>());
  } else if (input.is_array()) {
    for (const auto& v : input) {
      if (v.is_string()) out.push_back(v.get<std::string>());
    }
  }
  return out;
}

struct MockServer::Impl {
  httplib::Server server;
};

MockServer::MockServer(MockHandler handler, std::size_t threads, int port)
    : impl_(std::make_unique<Impl>()), handler_(std::move(handler)) {
  impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  impl_->server.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
    const auto now = ++in_flight_;
    auto peak = peak_.load();
    while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
    }
    MockRequest request;
    request.path = req.path;
    request.raw_body = req.body;
    request.authorization = req.get_header_value("Authorization");
    request.body = json::parse(req.body, nullptr, false);
    MockHandler handler;
    {
      std::lock_guard lock(mutex_);
      requests_.push_back(request);
      handler = handler_;
    }
    MockReply reply;
    if (request.body.is_discarded()) {
      reply = error_reply(400, "request body is not JSON");
    } else {
      try {
        reply = handler(request);
      } catch (const std::exception& e) {
        reply = error_reply(500, e.what());
      }
    }
    if (reply.delay.count() > 0) std::this_thread::sleep_for(reply.delay);
    --in_flight_;
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  if (port > 0) {
    port_ = impl_->server.bind_to_port("127.0.0.1", port) ? port : -1;
  } else {
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
  }
  if (port_ <= 0) throw std::runtime_error("mock server could not bind a port");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

MockServer::~MockServer() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

std::string MockServer::base_url() const {
  return "http://127.0.0.1:" + std::to_string(port_) + "/v1";
}

void MockServer::set_handler(MockHandler handler) {
  std::lock_guard lock(mutex_);
  handler_ = std::move(handler);
}

std::vector<MockRequest> MockServer::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t MockServer::request_count() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

void MockServer::reset_counters() {
  std::lock_guard lock(mutex_);
  requests_.clear();
  peak_ = in_flight_.load();
}

void ModelRouter::add(const std::string& model, MockHandler handler) {
  routes_[model] = std::move(handler);
}

MockReply ModelRouter::operator()(const MockRequest& request) const {
  const auto model = request.body.is_object() ? request.body.value("model", "") : std::string();
  auto it = routes_.find(model);
  if (it == routes_.end()) return error_reply(404, "unknown model '" + model + "'");
  return it->second(request);
}

}  // namespace medcap::mock
