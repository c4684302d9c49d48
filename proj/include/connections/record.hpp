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

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "connections/clock.hpp"
#include "connections/error.hpp"
#include "connections/puzzle.hpp"

namespace connections {

enum class SessionState { InProgress, Solved, Failed, Abandoned };

inline std::string_view to_string(SessionState s) {
  switch (s) {
    case SessionState::InProgress: return "in_progress";
    case SessionState::Solved: return "solved";
    case SessionState::Failed: return "failed";
    case SessionState::Abandoned: return "abandoned";
  }
  return "unknown";
}

inline SessionState session_state_from_string(std::string_view s) {
  if (s == "in_progress") return SessionState::InProgress;
  if (s == "solved") return SessionState::Solved;
  if (s == "failed") return SessionState::Failed;
  if (s == "abandoned") return SessionState::Abandoned;
  throw Error(ErrorCode::InvalidArgument, "unknown session state '" + std::string(s) + "'");
}

inline constexpr int kMinRating = 1;
inline constexpr int kMaxRating = 10;

/// Immutable outcome of one finished play session.
struct SessionRecord {
  std::string session_id;
  std::string puzzle_id;
  Condition condition = Condition::RealGame;
  bool correct = false;
  SessionState outcome = SessionState::Solved;  // terminal state
  double elapsed_minutes = 0.0;
  int hints_used = 0;
  int mistakes = 0;
  int mistake_budget = 0;
  int guess_count = 0;  // evaluated guesses; rejected submissions excluded
  std::optional<int> rating;
  std::string participant_id;
  Timestamp recorded_at{};

  void check() const {
    if (session_id.empty()) throw Error(ErrorCode::InvalidArgument, "record without session_id");
    if (!(elapsed_minutes >= 0.0)) throw Error(ErrorCode::InvalidArgument, "negative elapsed_minutes");
    if (outcome == SessionState::InProgress) {
      throw Error(ErrorCode::SessionStillInProgress, "record of an unfinished session", session_id);
    }
    if (correct != (outcome == SessionState::Solved)) {
      throw Error(ErrorCode::InvalidArgument, "correct flag disagrees with outcome", session_id);
    }
    if (rating && (*rating < kMinRating || *rating > kMaxRating)) {
      throw Error(ErrorCode::RatingOutOfRange, "rating outside 1..10", session_id);
    }
    if (hints_used < 0 || mistakes < 0 || guess_count < 0) {
      throw Error(ErrorCode::InvalidArgument, "negative counter in record", session_id);
    }
  }

  friend bool operator==(const SessionRecord&, const SessionRecord&) = default;
};

inline nlohmann::json to_json(const SessionRecord& r) {
  nlohmann::json j;
  j["session_id"] = r.session_id;
  j["puzzle_id"] = r.puzzle_id;
  j["condition"] = to_string(r.condition);
  j["correct"] = r.correct;
  j["outcome"] = to_string(r.outcome);
  j["elapsed_minutes"] = r.elapsed_minutes;
  j["hints_used"] = r.hints_used;
  j["mistakes"] = r.mistakes;
  j["mistake_budget"] = r.mistake_budget;
  j["guess_count"] = r.guess_count;
  j["rating"] = r.rating ? nlohmann::json(*r.rating) : nlohmann::json(nullptr);
  j["participant_id"] = r.participant_id;
  j["recorded_at"] = format_timestamp(r.recorded_at);
  return j;
}

inline SessionRecord record_from_json(const nlohmann::json& j) {
  try {
    SessionRecord r;
    r.session_id = j.at("session_id").get<std::string>();
    r.puzzle_id = j.at("puzzle_id").get<std::string>();
    auto cond = condition_from_string(j.at("condition").get<std::string>());
    if (!cond) throw Error(ErrorCode::InvalidArgument, "unknown condition");
    r.condition = *cond;
    r.correct = j.at("correct").get<bool>();
    r.outcome = j.contains("outcome") ? session_state_from_string(j.at("outcome").get<std::string>())
                                      : (r.correct ? SessionState::Solved : SessionState::Failed);
    r.elapsed_minutes = j.at("elapsed_minutes").get<double>();
    r.hints_used = j.at("hints_used").get<int>();
    r.mistakes = j.at("mistakes").get<int>();
    r.mistake_budget = j.value("mistake_budget", 0);
    r.guess_count = j.value("guess_count", 0);
    if (j.contains("rating") && !j.at("rating").is_null()) r.rating = j.at("rating").get<int>();
    r.participant_id = j.at("participant_id").get<std::string>();
    r.recorded_at = parse_timestamp(j.at("recorded_at").get<std::string>());
    r.check();
    return r;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed session record: ") + ex.what());
  }
}

}  // namespace connections
