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

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "connections/clock.hpp"
#include "connections/error.hpp"
#include "connections/puzzle.hpp"
#include "connections/record.hpp"

namespace connections {

enum class HintPolicy { CategoryNameReveal };

struct SessionConfig {
  int mistake_budget = 4;  // mistakes tolerated; one more ends the session as Failed
  HintPolicy hint_policy = HintPolicy::CategoryNameReveal;
  bool allow_rating = true;
  bool one_away_feedback = true;

  void check() const {
    if (mistake_budget < 0 || mistake_budget > 16) {
      throw Error(ErrorCode::InvalidArgument, "mistake_budget must lie in 0..16");
    }
  }
};

enum class RejectReason { NotFourWords, UnknownWord, WordAlreadySolved, SessionEnded };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::NotFourWords: return "NotFourWords";
    case RejectReason::UnknownWord: return "UnknownWord";
    case RejectReason::WordAlreadySolved: return "WordAlreadySolved";
    case RejectReason::SessionEnded: return "SessionEnded";
  }
  return "Unknown";
}

struct GuessOutcome {
  enum class Kind { Correct, Incorrect, Rejected };

  Kind kind = Kind::Rejected;
  std::size_t category = 0;  // Correct
  bool one_away = false;     // Incorrect
  RejectReason reason = RejectReason::NotFourWords;  // Rejected

  static GuessOutcome correct(std::size_t c) { return {Kind::Correct, c, false, {}}; }
  static GuessOutcome incorrect(bool one_away) { return {Kind::Incorrect, 0, one_away, {}}; }
  static GuessOutcome rejected(RejectReason r) { return {Kind::Rejected, 0, false, r}; }

  bool is_correct() const { return kind == Kind::Correct; }
  bool is_incorrect() const { return kind == Kind::Incorrect; }
  bool is_rejected() const { return kind == Kind::Rejected; }

  friend bool operator==(const GuessOutcome&, const GuessOutcome&) = default;
};

struct GuessLogEntry {
  std::vector<std::string> keys;
  GuessOutcome outcome;
  Timestamp at;
};

/**
 * Live solve state for one player on one puzzle.
 *
 * The session owns a copy of the puzzle. It is not internally synchronized;
 * callers sharing a session across threads serialize access themselves.
 */
class GameSession {
 public:
  GameSession(Puzzle puzzle, SessionConfig config,
              std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>())
      : puzzle_(std::move(puzzle)), config_(config), clock_(std::move(clock)) {
    config_.check();
    auto report = validate(puzzle_);
    if (!report.ok()) throw Error(ErrorCode::InvalidPuzzle, report.violations.front().describe());
    puzzle_id_ = connections::puzzle_id(puzzle_);
    started_at_ = clock_->now();
    last_activity_ = started_at_;
  }

  const Puzzle& puzzle() const { return puzzle_; }
  const std::string& puzzle_id() const { return puzzle_id_; }
  const SessionConfig& config() const { return config_; }
  SessionState state() const { return state_; }
  bool in_progress() const { return state_ == SessionState::InProgress; }
  const std::vector<std::size_t>& solved() const { return solved_; }
  int mistakes() const { return mistakes_; }
  int hints_used() const { return hints_used_; }
  int remaining_mistakes() const { return std::max(0, config_.mistake_budget - mistakes_); }
  const std::vector<GuessLogEntry>& guess_log() const { return log_; }
  Timestamp started_at() const { return started_at_; }
  std::optional<Timestamp> ended_at() const { return ended_at_; }
  Timestamp last_activity() const { return last_activity_; }
  std::optional<int> rating() const { return rating_; }
  const std::vector<std::size_t>& revealed_hints() const { return revealed_; }

  bool is_solved(std::size_t category) const {
    return std::find(solved_.begin(), solved_.end(), category) != solved_.end();
  }

  /// Largest overlap between the guess and any unsolved category.
  std::size_t max_unsolved_overlap(const std::vector<std::string>& keys) const {
    std::size_t best = 0;
    for (std::size_t c = 0; c < puzzle_.categories.size(); ++c) {
      if (is_solved(c)) continue;
      std::size_t n = 0;
      for (const auto& w : puzzle_.categories[c].words)
        n += std::count(keys.begin(), keys.end(), w.key());
      best = std::max(best, n);
    }
    return best;
  }

  GuessOutcome submit_guess(const std::vector<std::string>& words) {
    auto now = clock_->now();
    std::vector<std::string> keys;
    keys.reserve(words.size());
    for (const auto& w : words) keys.push_back(normalize_key(w));

    auto outcome = evaluate(keys);
    if (outcome.is_correct()) {
      solved_.push_back(outcome.category);
      if (solved_.size() == puzzle_.categories.size()) finish(SessionState::Solved, now);
    } else if (outcome.is_incorrect()) {
      ++mistakes_;
      if (mistakes_ > config_.mistake_budget) finish(SessionState::Failed, now);
    }
    if (!outcome.is_rejected()) last_activity_ = now;
    log_.push_back({std::move(keys), outcome, now});
    return outcome;
  }

  /// Name of the first unsolved, not-yet-revealed category in puzzle order.
  std::string request_hint() {
    if (!in_progress()) throw Error(ErrorCode::SessionEnded, "session has ended");
    for (std::size_t c = 0; c < puzzle_.categories.size(); ++c) {
      if (is_solved(c)) continue;
      if (std::find(revealed_.begin(), revealed_.end(), c) != revealed_.end()) continue;
      revealed_.push_back(c);
      ++hints_used_;
      last_activity_ = clock_->now();
      return puzzle_.categories[c].name;
    }
    throw Error(ErrorCode::NoHintLeft, "every unsolved category name is already revealed");
  }

  void abandon() { abandon_at(clock_->now()); }

  /// Abandons with an explicit end time (idle expiry uses the last activity).
  void abandon_at(Timestamp at) {
    if (!in_progress()) throw Error(ErrorCode::SessionEnded, "session has ended");
    finish(SessionState::Abandoned, at);
  }

  void rate_difficulty(int rating) {
    if (rating < kMinRating || rating > kMaxRating) {
      throw Error(ErrorCode::RatingOutOfRange, "rating must lie in 1..10");
    }
    if (in_progress()) throw Error(ErrorCode::SessionStillInProgress, "rate after the session ends");
    if (!config_.allow_rating) throw Error(ErrorCode::RatingNotAllowed, "ratings are disabled");
    if (rating_) throw Error(ErrorCode::AlreadyRated, "session already rated");
    rating_ = rating;
  }

  SessionRecord record(std::string session_id = {}, std::string participant_id = {}) const {
    if (in_progress()) throw Error(ErrorCode::SessionStillInProgress, "session still in progress");
    SessionRecord r;
    r.session_id = std::move(session_id);
    r.puzzle_id = puzzle_id_;
    r.condition = condition_of(puzzle_.provenance);
    r.correct = state_ == SessionState::Solved;
    r.outcome = state_;
    auto ms = (*ended_at_ - started_at_).count();
    r.elapsed_minutes = static_cast<double>(ms) / 60000.0;
    r.hints_used = hints_used_;
    r.mistakes = mistakes_;
    r.mistake_budget = config_.mistake_budget;
    r.guess_count = static_cast<int>(std::count_if(
        log_.begin(), log_.end(), [](const GuessLogEntry& e) { return !e.outcome.is_rejected(); }));
    r.rating = rating_;
    r.participant_id = std::move(participant_id);
    r.recorded_at = clock_->now();
    return r;
  }

 private:
  GuessOutcome evaluate(const std::vector<std::string>& keys) const {
    if (!in_progress()) return GuessOutcome::rejected(RejectReason::SessionEnded);
    std::set<std::string> distinct(keys.begin(), keys.end());
    if (keys.size() != kWordsPerCategory || distinct.size() != kWordsPerCategory) {
      return GuessOutcome::rejected(RejectReason::NotFourWords);
    }
    for (const auto& k : keys) {
      auto c = category_of(k);
      if (!c) return GuessOutcome::rejected(RejectReason::UnknownWord);
      if (is_solved(*c)) return GuessOutcome::rejected(RejectReason::WordAlreadySolved);
    }
    for (std::size_t c = 0; c < puzzle_.categories.size(); ++c) {
      if (is_solved(c)) continue;
      bool all = std::all_of(keys.begin(), keys.end(), [&](const std::string& k) {
        return category_of(k) == c;
      });
      if (all) return GuessOutcome::correct(c);
    }
    bool one_away = config_.one_away_feedback && max_unsolved_overlap(keys) == kWordsPerCategory - 1;
    return GuessOutcome::incorrect(one_away);
  }

  std::optional<std::size_t> category_of(const std::string& key) const {
    for (std::size_t c = 0; c < puzzle_.categories.size(); ++c)
      for (const auto& w : puzzle_.categories[c].words)
        if (w.key() == key) return c;
    return std::nullopt;
  }

  void finish(SessionState s, Timestamp at) {
    state_ = s;
    ended_at_ = at;
    last_activity_ = at;
  }

  Puzzle puzzle_;
  SessionConfig config_;
  std::shared_ptr<const Clock> clock_;
  std::string puzzle_id_;
  SessionState state_ = SessionState::InProgress;
  std::vector<std::size_t> solved_;
  std::vector<std::size_t> revealed_;
  int mistakes_ = 0;
  int hints_used_ = 0;
  std::vector<GuessLogEntry> log_;
  Timestamp started_at_{};
  Timestamp last_activity_{};
  std::optional<Timestamp> ended_at_;
  std::optional<int> rating_;
};

inline GameSession start_session(Puzzle puzzle, SessionConfig config = {},
                                 std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>()) {
  return GameSession(std::move(puzzle), config, std::move(clock));
}

}  // namespace connections
