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
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "connections/chat_client.hpp"
#include "connections/clock.hpp"
#include "connections/error.hpp"
#include "connections/prompt_assets.hpp"
#include "connections/puzzle.hpp"

namespace connections {

/// The prompt text for a generation condition, byte-identical to the files
/// under assets/prompts/.
inline std::string_view render_prompt(PromptKind kind) {
  return kind == PromptKind::ZeroShot ? assets::kZeroShotPrompt : assets::kRoleInjectedPrompt;
}

struct GenerationConfig {
  std::string model_id;
  int max_attempts = 3;
  nlohmann::json sampling = nlohmann::json::object();

  void check() const {
    if (max_attempts < 1) throw Error(ErrorCode::InvalidArgument, "max_attempts must be >= 1");
  }
};

struct GenerationRecord {
  PromptKind prompt_kind = PromptKind::ZeroShot;
  std::string model_id;
  int attempts_used = 0;
  std::vector<std::string> raw_responses;
  std::optional<Puzzle> puzzle;
  std::vector<std::string> failure_reasons;  // one per rejected attempt
  Timestamp timestamp{};

  bool succeeded() const { return puzzle.has_value(); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["prompt_kind"] = to_string(prompt_kind);
    j["model_id"] = model_id;
    j["attempts_used"] = attempts_used;
    j["raw_responses"] = raw_responses;
    j["failure_reasons"] = failure_reasons;
    j["outcome"] = puzzle ? "puzzle" : "failed";
    j["puzzle_id"] = puzzle ? nlohmann::json(puzzle_id(*puzzle)) : nlohmann::json(nullptr);
    j["timestamp"] = format_timestamp(timestamp);
    return j;
  }
};

class GenerationFailed : public Error {
 public:
  explicit GenerationFailed(GenerationRecord record)
      : Error(ErrorCode::GenerationFailed,
              "no valid puzzle after " + std::to_string(record.attempts_used) + " attempt(s)"),
        record_(std::move(record)) {}

  const GenerationRecord& record() const noexcept { return record_; }

 private:
  GenerationRecord record_;
};

/**
 * Returns the first balanced `{...}` or `[...]` block in a model response,
 * byte-for-byte. Code fences and surrounding prose fall outside the block and
 * are dropped. Brackets inside JSON string literals do not count toward
 * balance. Throws Error(NoJsonFound) when no opening bracket has a match.
 */
inline std::string extract_json_block(std::string_view response) {
  for (std::size_t start = 0; start < response.size(); ++start) {
    char open = response[start];
    if (open != '{' && open != '[') continue;

    std::vector<char> expect;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < response.size(); ++i) {
      char c = response[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        expect.push_back('}');
      } else if (c == '[') {
        expect.push_back(']');
      } else if (c == '}' || c == ']') {
        if (expect.empty() || expect.back() != c) break;
        expect.pop_back();
        if (expect.empty()) return std::string(response.substr(start, i - start + 1));
      }
    }
  }
  throw Error(ErrorCode::NoJsonFound, "response contains no balanced JSON block");
}

struct GenerationResult {
  Puzzle puzzle;
  GenerationRecord record;
};

/**
 * Sends the condition's prompt and keeps asking until a response yields a
 * valid puzzle or `max_attempts` responses have been rejected. Transport
 * errors propagate immediately; they are not counted as attempts.
 */
inline GenerationResult generate_puzzle(ChatClient& client, PromptKind kind,
                                        const GenerationConfig& config,
                                        const Clock& clock = SystemClock{}) {
  config.check();
  GenerationRecord record;
  record.prompt_kind = kind;
  record.model_id = config.model_id;
  record.timestamp = clock.now();

  ChatRequest request{config.model_id, std::string(render_prompt(kind)), config.sampling};
  auto provenance = PuzzleProvenance::model(kind, config.model_id, record.timestamp);

  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    std::string raw = client.complete(request);
    record.raw_responses.push_back(raw);
    record.attempts_used = attempt;
    try {
      auto puzzles = parse_puzzle_document(extract_json_block(raw), provenance);
      if (puzzles.empty()) throw Error(ErrorCode::WrongCategoryCount, "document holds no puzzle");
      auto report = validate(puzzles.front());
      if (!report.ok()) {
        throw Error(ErrorCode::InvalidPuzzle, report.violations.front().describe());
      }
      record.puzzle = puzzles.front();
      return {puzzles.front(), std::move(record)};
    } catch (const Error& e) {
      record.failure_reasons.push_back(e.what());
    }
  }
  throw GenerationFailed(std::move(record));
}

}  // namespace connections
