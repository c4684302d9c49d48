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
#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "connections/clock.hpp"
#include "connections/error.hpp"
#include "connections/game.hpp"
#include "connections/metrics.hpp"
#include "connections/puzzle.hpp"
#include "connections/study.hpp"

namespace connections {

// ---------------------------------------------------------------------------
// Puzzle pool

/**
 * Puzzles available for play, grouped by condition.
 *
 * On disk: `<dir>/<condition>/<name>.json`, where `<condition>` is one of
 * zero_shot, role_injected, real_game and each file is a puzzle document.
 * For the two model conditions the file stem is taken as the model id.
 */
class PuzzlePool {
 public:
  void add(Puzzle p) {
    auto c = condition_of(p.provenance);
    by_condition_[static_cast<std::size_t>(c)].push_back(std::move(p));
  }

  const std::vector<Puzzle>& puzzles(Condition c) const { return by_condition_[static_cast<std::size_t>(c)]; }
  bool empty() const {
    return std::all_of(by_condition_.begin(), by_condition_.end(), [](const auto& v) { return v.empty(); });
  }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& v : by_condition_) n += v.size();
    return n;
  }

  static PuzzlePool load_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
      throw Error(ErrorCode::IoError, "puzzle pool " + dir.string() + " is not a directory");
    }
    PuzzlePool pool;
    for (auto cond : kConditionOrder) {
      auto sub = dir / std::string(to_string(cond));
      if (!std::filesystem::is_directory(sub)) continue;
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(sub)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        PuzzleProvenance prov;
        if (cond != Condition::RealGame) {
          prov = PuzzleProvenance::model(
              cond == Condition::ZeroShot ? PromptKind::ZeroShot : PromptKind::RoleInjected,
              f.stem().string());
        }
        for (auto& p : parse_puzzle_document(ss.str(), prov)) pool.add(std::move(p));
      }
    }
    return pool;
  }

 private:
  std::array<std::vector<Puzzle>, 3> by_condition_;
};

// ---------------------------------------------------------------------------
// Server

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0: pick a free port
  std::filesystem::path records_path = "records.jsonl";
  std::optional<std::filesystem::path> metrics_path;  // analyze output served at /report/metrics
  std::vector<std::string> cors_allowlist;
  SessionConfig session_config;
  std::chrono::minutes idle_timeout{60};
  std::optional<std::uint64_t> rng_seed;  // fixed seed for reproducible ids and shuffles
};

/**
 * HTTP JSON API for study sessions.
 *
 * Live sessions are held in memory; each carries its own mutex so operations
 * on one session are serialized while distinct sessions proceed in
 * parallel. A session's record is appended to the store when it reaches a
 * terminal state; a later rating is attached as an amendment. In-progress
 * sessions do not survive a restart.
 */
class StudyServer {
 public:
  StudyServer(ServerConfig config, PuzzlePool pool,
              std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>())
      : config_(std::move(config)),
        pool_(std::move(pool)),
        clock_(std::move(clock)),
        store_(config_.records_path),
        rng_(config_.rng_seed ? *config_.rng_seed : std::random_device{}() ^
                                                         (std::uint64_t{std::random_device{}()} << 32)) {
    config_.session_config.check();
    // Plain SO_REUSEADDR: a second server on a busy port must fail to bind
    // rather than silently share it and split live sessions.
    http_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    routes();
  }

  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  ~StudyServer() { stop(); }

  /// Binds the listening socket; returns the bound port or throws.
  int bind() {
    int port = config_.port;
    if (port == 0) {
      port = http_.bind_to_any_port(config_.host);
      if (port < 0) throw Error(ErrorCode::IoError, "cannot bind " + config_.host);
    } else if (!http_.bind_to_port(config_.host, port)) {
      throw Error(ErrorCode::IoError, "cannot bind " + config_.host + ":" + std::to_string(port));
    }
    bound_port_ = port;
    return port;
  }

  /// Serves until stop(). Call bind() first.
  void serve() { http_.listen_after_bind(); }

  void stop() {
    if (http_.is_running()) http_.stop();
  }

  bool is_running() const { return http_.is_running(); }
  void wait_until_ready() const { http_.wait_until_ready(); }
  int port() const { return bound_port_; }
  const RecordStore& store() const { return store_; }

  /// Abandons in-progress sessions idle past the timeout (ended at their last
  /// activity) and forgets finished sessions one timeout after they were recorded.
  void expire_idle_sessions() {
    auto now = clock_->now();
    std::vector<std::pair<std::string, std::shared_ptr<LiveSession>>> snapshot;
    {
      std::lock_guard lock(sessions_mu_);
      snapshot.assign(sessions_.begin(), sessions_.end());
    }
    std::vector<std::string> drop;
    for (auto& [id, live] : snapshot) {
      std::lock_guard lock(live->mu);
      if (live->game.in_progress()) {
        if (now - live->game.last_activity() <= config_.idle_timeout) continue;
        live->game.abandon_at(live->game.last_activity());
        persist(id, *live);
      } else if (live->persisted && now - live->persisted_at > config_.idle_timeout) {
        drop.push_back(id);
      }
    }
    std::lock_guard lock(sessions_mu_);
    for (const auto& id : drop) sessions_.erase(id);
  }

 private:
  struct LiveSession {
    LiveSession(GameSession g, std::string participant, std::uint64_t seed, Timestamp created)
        : game(std::move(g)), participant_id(std::move(participant)), shuffle_seed(seed), created_at(created) {}

    std::mutex mu;
    GameSession game;
    std::string participant_id;
    std::uint64_t shuffle_seed;
    Timestamp created_at;
    bool persisted = false;
    Timestamp persisted_at{};
  };

  using Json = nlohmann::json;

  static void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
  static void fail(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    reply(res, status, Json{{"error", code}, {"message", message}});
  }

  std::string new_session_id() {
    std::lock_guard lock(rng_mu_);
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                  static_cast<unsigned long long>(rng_()));
    return buf;
  }

  std::uint64_t next_seed() {
    std::lock_guard lock(rng_mu_);
    return rng_();
  }

  static std::vector<std::string> shuffled_words(const Puzzle& p, std::uint64_t seed) {
    std::vector<std::string> words;
    for (const auto& c : p.categories)
      for (const auto& w : c.words) words.push_back(w.display());
    std::mt19937_64 gen(seed);
    for (std::size_t i = words.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(gen() % i);
      std::swap(words[i - 1], words[j]);
    }
    return words;
  }

  std::shared_ptr<LiveSession> find_session(const std::string& id) {
    std::lock_guard lock(sessions_mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  // Caller holds live.mu.
  void persist(const std::string& id, LiveSession& live) {
    if (live.persisted || live.game.in_progress()) return;
    store_.append(live.game.record(id, live.participant_id));
    live.persisted = true;
    live.persisted_at = clock_->now();
  }

  std::optional<Condition> pick_condition() {
    std::lock_guard lock(rotation_mu_);
    for (std::size_t i = 0; i < kConditionOrder.size(); ++i) {
      auto c = kConditionOrder[(condition_cursor_ + i) % kConditionOrder.size()];
      if (!pool_.puzzles(c).empty()) {
        condition_cursor_ = (condition_cursor_ + i + 1) % kConditionOrder.size();
        return c;
      }
    }
    return std::nullopt;
  }

  const Puzzle& pick_puzzle(Condition c) {
    std::lock_guard lock(rotation_mu_);
    const auto& list = pool_.puzzles(c);
    auto& cursor = puzzle_cursor_[static_cast<std::size_t>(c)];
    const Puzzle& p = list[cursor % list.size()];
    cursor = (cursor + 1) % list.size();
    return p;
  }

  void routes() {
    http_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
      apply_cors(req, res);
      if (req.method == "OPTIONS") {
        res.status = 204;
        return httplib::Server::HandlerResponse::Handled;
      }
      expire_idle_sessions();
      return httplib::Server::HandlerResponse::Unhandled;
    });
    http_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    http_.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      create_session(req, res);
    });
    http_.Post(R"(/sessions/([0-9a-f]+)/guess)", [this](const httplib::Request& req, httplib::Response& res) {
      guess(req.matches[1], req, res);
    });
    http_.Post(R"(/sessions/([0-9a-f]+)/hint)", [this](const httplib::Request& req, httplib::Response& res) {
      hint(req.matches[1], res);
    });
    http_.Post(R"(/sessions/([0-9a-f]+)/rating)", [this](const httplib::Request& req, httplib::Response& res) {
      rating(req.matches[1], req, res);
    });
    http_.Post(R"(/sessions/([0-9a-f]+)/abandon)", [this](const httplib::Request& req, httplib::Response& res) {
      abandon(req.matches[1], res);
    });
    http_.Get("/report/study", [this](const httplib::Request&, httplib::Response& res) {
      auto records = store_.read_all();
      reply(res, 200, to_json(aggregate(records)));
    });
    http_.Get("/report/metrics", [this](const httplib::Request&, httplib::Response& res) {
      report_metrics(res);
    });
    http_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        fail(res, 500, "InternalError", e.what());
      } catch (...) {
        fail(res, 500, "InternalError", "unknown failure");
      }
    });
  }

  void apply_cors(const httplib::Request& req, httplib::Response& res) const {
    auto origin = req.get_header_value("Origin");
    if (origin.empty()) return;
    if (std::find(config_.cors_allowlist.begin(), config_.cors_allowlist.end(), origin) ==
        config_.cors_allowlist.end()) {
      return;
    }
    res.set_header("Access-Control-Allow-Origin", origin);
    res.set_header("Vary", "Origin");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  }

  static std::optional<Json> parse_body(const httplib::Request& req, httplib::Response& res) {
    if (req.body.empty()) return Json::object();
    try {
      auto j = Json::parse(req.body);
      if (!j.is_object()) {
        fail(res, 422, "MalformedBody", "body must be a JSON object");
        return std::nullopt;
      }
      return j;
    } catch (const Json::exception& e) {
      fail(res, 422, "MalformedBody", e.what());
      return std::nullopt;
    }
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    auto body = parse_body(req, res);
    if (!body) return;
    if (!body->contains("participant_id") || !(*body)["participant_id"].is_string()) {
      return fail(res, 400, "BadRequest", "participant_id (string) is required");
    }
    std::optional<Condition> cond;
    if (body->contains("condition") && !(*body)["condition"].is_null()) {
      if (!(*body)["condition"].is_string()) return fail(res, 400, "BadCondition", "condition must be a string");
      cond = condition_from_string((*body)["condition"].get<std::string>());
      if (!cond) return fail(res, 400, "BadCondition", "unknown condition");
      if (pool_.puzzles(*cond).empty()) return fail(res, 404, "NoPuzzleAvailable", "no puzzle for condition");
    } else {
      cond = pick_condition();
      if (!cond) return fail(res, 404, "NoPuzzleAvailable", "puzzle pool is empty");
    }

    const Puzzle& puzzle = pick_puzzle(*cond);
    auto seed = next_seed();
    auto id = new_session_id();
    auto live = std::make_shared<LiveSession>(GameSession(puzzle, config_.session_config, clock_),
                                              (*body)["participant_id"].get<std::string>(), seed,
                                              clock_->now());
    auto words = shuffled_words(puzzle, seed);
    {
      std::lock_guard lock(sessions_mu_);
      sessions_.emplace(id, live);
    }
    reply(res, 200,
          Json{{"session_id", id},
               {"words", words},
               {"mistake_budget", config_.session_config.mistake_budget},
               {"shuffle_seed", seed}});
  }

  void guess(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto live = find_session(id);
    if (!live) return fail(res, 404, "UnknownSession", "no such session");
    auto body = parse_body(req, res);
    if (!body) return;
    const auto& w = (*body)["words"];
    if (!w.is_array() || w.size() != kWordsPerCategory ||
        !std::all_of(w.begin(), w.end(), [](const Json& x) { return x.is_string(); })) {
      return fail(res, 422, "MalformedGuess", "words must be an array of 4 strings");
    }
    auto words = w.get<std::vector<std::string>>();

    std::lock_guard lock(live->mu);
    auto& game = live->game;
    auto outcome = game.submit_guess(words);
    if (outcome.is_rejected()) {
      if (outcome.reason == RejectReason::SessionEnded) {
        return fail(res, 409, "SessionEnded", "session has ended");
      }
      return fail(res, 422, to_string(outcome.reason), "guess rejected");
    }
    persist(id, *live);

    Json out{{"remaining_mistakes", game.remaining_mistakes()}, {"state", to_string(game.state())}};
    if (outcome.is_correct()) {
      const auto& cat = game.puzzle().categories[outcome.category];
      std::vector<std::string> solved_words;
      for (const auto& x : cat.words) solved_words.push_back(x.display());
      out["outcome"] = "correct";
      out["solved_category_name"] = cat.name;
      out["solved_words"] = solved_words;
    } else {
      out["outcome"] = "incorrect";
      out["one_away"] = outcome.one_away;
    }
    reply(res, 200, out);
  }

  void hint(const std::string& id, httplib::Response& res) {
    auto live = find_session(id);
    if (!live) return fail(res, 404, "UnknownSession", "no such session");
    std::lock_guard lock(live->mu);
    try {
      auto name = live->game.request_hint();
      reply(res, 200, Json{{"hint", name}, {"hints_used", live->game.hints_used()}});
    } catch (const Error& e) {
      fail(res, 409, to_string(e.code()), e.what());
    }
  }

  void rating(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto live = find_session(id);
    if (!live) return fail(res, 404, "UnknownSession", "no such session");
    auto body = parse_body(req, res);
    if (!body) return;
    if (!(*body)["rating"].is_number_integer()) {
      return fail(res, 422, "RatingOutOfRange", "rating must be an integer 1..10");
    }
    int value = (*body)["rating"].get<int>();
    std::lock_guard lock(live->mu);
    try {
      live->game.rate_difficulty(value);
    } catch (const Error& e) {
      int status = e.code() == ErrorCode::RatingOutOfRange ? 422 : 409;
      return fail(res, status, to_string(e.code()), e.what());
    }
    persist(id, *live);
    store_.attach_rating(id, value, clock_->now());
    reply(res, 200, Json{{"ok", true}});
  }

  void abandon(const std::string& id, httplib::Response& res) {
    auto live = find_session(id);
    if (!live) return fail(res, 404, "UnknownSession", "no such session");
    std::lock_guard lock(live->mu);
    try {
      live->game.abandon();
    } catch (const Error& e) {
      return fail(res, 409, to_string(e.code()), e.what());
    }
    persist(id, *live);
    reply(res, 200, Json{{"ok", true}});
  }

  void report_metrics(httplib::Response& res) {
    if (!config_.metrics_path) return reply(res, 200, to_json(CorpusMetrics{}));
    std::ifstream in(*config_.metrics_path, std::ios::binary);
    if (!in) return fail(res, 500, "IoError", "cannot read metrics file");
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = Json::parse(ss.str());
    reply(res, 200, to_json(corpus_from_json(j.contains("corpus") ? j.at("corpus") : j)));
  }

  ServerConfig config_;
  PuzzlePool pool_;
  std::shared_ptr<const Clock> clock_;
  RecordStore store_;
  httplib::Server http_;
  int bound_port_ = -1;

  std::mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<LiveSession>> sessions_;

  std::mutex rng_mu_;
  std::mt19937_64 rng_;

  std::mutex rotation_mu_;
  std::size_t condition_cursor_ = 0;
  std::array<std::size_t, 3> puzzle_cursor_{};
};

}  // namespace connections
