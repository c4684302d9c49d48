// Copyright 2026 The Connections Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "connections/error.hpp"

namespace connections {

/// One single-turn completion request.
struct ChatRequest {
  std::string model_id;
  std::string prompt;
  nlohmann::json sampling = nlohmann::json::object();  // passed through verbatim
};

/**
 * Chat-completion backend: prompt text in, response text out.
 *
 * Implementations throw Error(TransportError) when the backend cannot be
 * reached or answers with a non-success status. Malformed *content* is not a
 * transport error; it is returned as text and judged by the caller.
 */
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
};

/**
 * Replays a fixed script of responses. Each call consumes the next entry;
 * once the script is exhausted the last entry repeats when `repeat_last` is
 * set, otherwise the call fails with TransportError.
 */
class ScriptedChatClient final : public ChatClient {
 public:
  struct Step {
    std::string text;
    bool transport_failure = false;
  };

  ScriptedChatClient() = default;
  explicit ScriptedChatClient(std::vector<std::string> responses, bool repeat_last = false)
      : repeat_last_(repeat_last) {
    for (auto& r : responses) script_.push_back({std::move(r), false});
  }

  void push_response(std::string text) {
    std::lock_guard lock(mu_);
    script_.push_back({std::move(text), false});
  }
  void push_transport_failure(std::string message) {
    std::lock_guard lock(mu_);
    script_.push_back({std::move(message), true});
  }
  void set_repeat_last(bool on) {
    std::lock_guard lock(mu_);
    repeat_last_ = on;
  }

  std::string complete(const ChatRequest& request) override {
    std::lock_guard lock(mu_);
    transcript_.push_back(request);
    if (script_.empty()) throw Error(ErrorCode::TransportError, "script is empty");
    std::size_t i = next_;
    if (i >= script_.size()) {
      if (!repeat_last_) throw Error(ErrorCode::TransportError, "script exhausted");
      i = script_.size() - 1;
    } else {
      ++next_;
    }
    const Step& step = script_[i];
    if (step.transport_failure) throw Error(ErrorCode::TransportError, step.text);
    return step.text;
  }

  std::size_t call_count() const {
    std::lock_guard lock(mu_);
    return transcript_.size();
  }
  std::vector<ChatRequest> transcript() const {
    std::lock_guard lock(mu_);
    return transcript_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<Step> script_;
  std::size_t next_ = 0;
  bool repeat_last_ = false;
  std::vector<ChatRequest> transcript_;
};

/// Backend-specific request/response JSON mapping for HttpChatClient.
class ChatBackendAdapter {
 public:
  virtual ~ChatBackendAdapter() = default;
  virtual std::string path() const = 0;
  virtual nlohmann::json build_request(const ChatRequest& request) const = 0;
  virtual std::string parse_response(const nlohmann::json& body) const = 0;
};

/// `/v1/chat/completions` style: messages in, choices[0].message.content out.
class OpenAiChatAdapter final : public ChatBackendAdapter {
 public:
  std::string path() const override { return "/v1/chat/completions"; }

  nlohmann::json build_request(const ChatRequest& request) const override {
    nlohmann::json body = nlohmann::json::object();
    if (request.sampling.is_object()) body = request.sampling;
    body["model"] = request.model_id;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}});
    return body;
  }

  std::string parse_response(const nlohmann::json& body) const override {
    const auto& choices = body.at("choices");
    if (!choices.is_array() || choices.empty()) {
      throw Error(ErrorCode::TransportError, "response carries no choices");
    }
    return choices.at(0).at("message").at("content").get<std::string>();
  }
};

struct HttpChatConfig {
  std::string base_url;                    // scheme://host[:port]
  std::string token_env = "LLM_API_TOKEN"; // name of the env var holding the bearer token
  int timeout_seconds = 120;
};

class HttpChatClient final : public ChatClient {
 public:
  HttpChatClient(HttpChatConfig config, std::unique_ptr<ChatBackendAdapter> adapter =
                                            std::make_unique<OpenAiChatAdapter>())
      : config_(std::move(config)), adapter_(std::move(adapter)) {
    if (config_.base_url.empty()) {
      throw Error(ErrorCode::InvalidArgument, "chat backend base URL is empty");
    }
  }

  std::string complete(const ChatRequest& request) override {
    httplib::Client cli(config_.base_url);
    cli.set_read_timeout(config_.timeout_seconds, 0);
    cli.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (const char* tok = std::getenv(config_.token_env.c_str()); tok && *tok) {
      headers.emplace("Authorization", std::string("Bearer ") + tok);
    }
    auto body = adapter_->build_request(request).dump();
    auto res = cli.Post(adapter_->path(), headers, body, "application/json");
    if (!res) {
      throw Error(ErrorCode::TransportError,
                  "request to " + config_.base_url + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
      throw Error(ErrorCode::TransportError, "backend answered HTTP " + std::to_string(res->status));
    }
    try {
      return adapter_->parse_response(nlohmann::json::parse(res->body));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorCode::TransportError, std::string("unreadable backend response: ") + ex.what());
    }
  }

 private:
  HttpChatConfig config_;
  std::unique_ptr<ChatBackendAdapter> adapter_;
};

}  // namespace connections
