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
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "connections/error.hpp"
#include "connections/metrics.hpp"
#include "connections/record.hpp"

namespace connections {

// ---------------------------------------------------------------------------
// Record store

/**
 * Append-only newline-delimited JSON file of session records.
 *
 * Each line is either a SessionRecord object or a rating amendment
 * `{"amends": <session_id>, "rating": <1..10>, "recorded_at": ...}` that
 * attaches a rating to an earlier record. Readers fold amendments into their
 * records. A trailing line without a newline is an in-flight write and is
 * ignored, so readers always observe a consistent prefix.
 */
class RecordStore {
 public:
  explicit RecordStore(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) {
      std::ofstream create(path_, std::ios::app);
      if (!create) throw Error(ErrorCode::IoError, "cannot create " + path_.string());
    }
    for (const auto& r : read_all()) {
      ids_.insert(r.session_id);
      if (r.rating) rated_.insert(r.session_id);
    }
  }

  const std::filesystem::path& path() const { return path_; }

  void append(const SessionRecord& record) {
    record.check();
    std::lock_guard lock(mu_);
    if (ids_.count(record.session_id)) {
      throw Error(ErrorCode::DuplicateRecord, "session already recorded", record.session_id);
    }
    write_line(to_json(record).dump());
    ids_.insert(record.session_id);
    if (record.rating) rated_.insert(record.session_id);
  }

  void attach_rating(const std::string& session_id, int rating, Timestamp at) {
    if (rating < kMinRating || rating > kMaxRating) {
      throw Error(ErrorCode::RatingOutOfRange, "rating must lie in 1..10", session_id);
    }
    std::lock_guard lock(mu_);
    if (!ids_.count(session_id)) throw Error(ErrorCode::UnknownRecord, "no such record", session_id);
    if (rated_.count(session_id)) throw Error(ErrorCode::AlreadyRated, "record already rated", session_id);
    nlohmann::json j{{"amends", session_id}, {"rating", rating}, {"recorded_at", format_timestamp(at)}};
    write_line(j.dump());
    rated_.insert(session_id);
  }

  bool contains(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    return ids_.count(session_id) > 0;
  }

  std::vector<SessionRecord> read_all() const { return read_records(path_); }

  static std::vector<SessionRecord> read_records(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();

    std::vector<SessionRecord> records;
    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string::npos) break;  // partial trailing line
      std::string_view line(text.data() + pos, nl - pos);
      pos = nl + 1;
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorCode::IoError,
                    path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
      }
      if (j.contains("amends")) {
        auto id = j.at("amends").get<std::string>();
        auto it = std::find_if(records.begin(), records.end(),
                               [&](const SessionRecord& r) { return r.session_id == id; });
        if (it == records.end()) {
          throw Error(ErrorCode::UnknownRecord,
                      path.string() + ":" + std::to_string(lineno) + ": amendment for unknown session", id);
        }
        it->rating = j.at("rating").get<int>();
        continue;
      }
      records.push_back(record_from_json(j));
    }
    return records;
  }

 private:
  void write_line(const std::string& line) {
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, "cannot append to " + path_.string());
    out << line << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "append failed for " + path_.string());
  }

  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::unordered_set<std::string> ids_;
  std::unordered_set<std::string> rated_;
};

// ---------------------------------------------------------------------------
// Aggregation

struct AggregateOptions {
  bool exclude_abandoned = false;  // default: abandoned sessions count as incorrect
};

/// Running sums for one condition; means are derived on demand so partial
/// aggregates can be merged.
struct ConditionSums {
  std::size_t n = 0;
  std::size_t correct = 0;
  std::size_t rated = 0;
  long long rating_sum = 0;
  long long hints_sum = 0;
  Accum time_sum = 0;

  void add(const SessionRecord& r) {
    ++n;
    correct += r.correct ? 1 : 0;
    if (r.rating) {
      ++rated;
      rating_sum += *r.rating;
    }
    hints_sum += r.hints_used;
    time_sum += r.elapsed_minutes;
  }
  void merge(const ConditionSums& o) {
    n += o.n;
    correct += o.correct;
    rated += o.rated;
    rating_sum += o.rating_sum;
    hints_sum += o.hints_sum;
    time_sum += o.time_sum;
  }
};

struct ConditionStats {
  Condition condition = Condition::RealGame;
  std::size_t n = 0;
  std::optional<double> avg_difficulty;  // nullopt when no record is rated
  double correctness_rate = 0.0;         // percent
  double avg_hints = 0.0;
  double avg_time_minutes = 0.0;
};

inline constexpr std::array<Condition, 3> kConditionOrder{Condition::RoleInjected, Condition::ZeroShot,
                                                          Condition::RealGame};

class StudyAccumulator {
 public:
  explicit StudyAccumulator(AggregateOptions options = {}) : options_(options) {}

  void add(const SessionRecord& r) {
    if (options_.exclude_abandoned && r.outcome == SessionState::Abandoned) return;
    sums_[index(r.condition)].add(r);
  }
  void merge(const StudyAccumulator& other) {
    for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i].merge(other.sums_[i]);
  }
  const ConditionSums& sums(Condition c) const { return sums_[index(c)]; }

  /// Conditions with at least one record, in Role, Zero, Real order.
  std::vector<ConditionStats> stats() const {
    std::vector<ConditionStats> out;
    for (auto c : kConditionOrder) {
      const auto& s = sums_[index(c)];
      if (s.n == 0) continue;
      ConditionStats st;
      st.condition = c;
      st.n = s.n;
      if (s.rated) st.avg_difficulty = static_cast<double>(s.rating_sum) / static_cast<double>(s.rated);
      st.correctness_rate = (100.0 * static_cast<double>(s.correct)) / static_cast<double>(s.n);
      st.avg_hints = static_cast<double>(s.hints_sum) / static_cast<double>(s.n);
      st.avg_time_minutes = static_cast<double>(s.time_sum / static_cast<Accum>(s.n));
      out.push_back(st);
    }
    return out;
  }

 private:
  static std::size_t index(Condition c) { return static_cast<std::size_t>(c); }

  AggregateOptions options_;
  std::array<ConditionSums, 3> sums_{};
};

struct StudyAggregate {
  std::vector<ConditionStats> conditions;

  const ConditionStats* find(Condition c) const {
    for (const auto& s : conditions)
      if (s.condition == c) return &s;
    return nullptr;
  }
};

inline StudyAggregate aggregate(std::span<const SessionRecord> records, AggregateOptions options = {}) {
  StudyAccumulator acc(options);
  for (const auto& r : records) acc.add(r);
  return {acc.stats()};
}

inline nlohmann::json to_json(const StudyAggregate& agg) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : agg.conditions) {
    rows.push_back({{"condition", to_string(s.condition)},
                    {"n", s.n},
                    {"avg_difficulty", s.avg_difficulty ? nlohmann::json(*s.avg_difficulty) : nlohmann::json(nullptr)},
                    {"correctness_rate", s.correctness_rate},
                    {"avg_hints", s.avg_hints},
                    {"avg_time_minutes", s.avg_time_minutes}});
  }
  return {{"conditions", rows}};
}

inline std::string condition_display_name(Condition c) {
  switch (c) {
    case Condition::RoleInjected: return "Role-Injected";
    case Condition::ZeroShot: return "Zero Prompt";
    case Condition::RealGame: return "Real Game";
  }
  return "?";
}

/**
 * One block per statistic (difficulty, correctness, hints, time), each
 * listing the conditions from highest to lowest value.
 */
inline std::string render_study_report(const StudyAggregate& agg) {
  struct Section {
    const char* title;
    int decimals;
    const char* unit;
    std::optional<double> (*value)(const ConditionStats&);
  };
  const Section sections[] = {
      {"Average Difficulty Rating (1-10)", 2, "",
       [](const ConditionStats& s) { return s.avg_difficulty; }},
      {"Correctness Rate", 1, "%",
       [](const ConditionStats& s) -> std::optional<double> { return s.correctness_rate; }},
      {"Average Hint Requests", 2, "",
       [](const ConditionStats& s) -> std::optional<double> { return s.avg_hints; }},
      {"Average Solving Time", 2, " min",
       [](const ConditionStats& s) -> std::optional<double> { return s.avg_time_minutes; }},
  };
  std::string out;
  for (const auto& sec : sections) {
    out += sec.title;
    out += '\n';
    std::vector<const ConditionStats*> rows;
    for (const auto& s : agg.conditions) rows.push_back(&s);
    std::stable_sort(rows.begin(), rows.end(), [&](const ConditionStats* a, const ConditionStats* b) {
      return sec.value(*a).value_or(-1.0) > sec.value(*b).value_or(-1.0);
    });
    for (const auto* s : rows) {
      auto v = sec.value(*s);
      std::string name = condition_display_name(s->condition);
      name.resize(15, ' ');
      out += "  " + name + (v ? format_fixed(*v, sec.decimals) + sec.unit : std::string("n/a")) +
             "  (n=" + std::to_string(s->n) + ")\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV / JSON export

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

inline std::string number_text(double v) { return nlohmann::json(v).dump(); }

/// RFC 4180 rows; quoted fields may contain separators, quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw Error(ErrorCode::InvalidArgument, "unterminated quoted CSV field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline constexpr std::string_view kRecordCsvHeader =
    "session_id,puzzle_id,condition,correct,outcome,elapsed_minutes,hints_used,mistakes,"
    "mistake_budget,guess_count,rating,participant_id,recorded_at";

inline constexpr std::string_view kAggregateCsvHeader =
    "condition,n,avg_difficulty,correctness_rate,avg_hints,avg_time_minutes";

inline std::string records_to_csv(std::span<const SessionRecord> records) {
  std::string out(kRecordCsvHeader);
  out += '\n';
  for (const auto& r : records) {
    out += detail::csv_field(r.session_id) + ',' + detail::csv_field(r.puzzle_id) + ',' +
           std::string(to_string(r.condition)) + ',' + (r.correct ? "true" : "false") + ',' +
           std::string(to_string(r.outcome)) + ',' + detail::number_text(r.elapsed_minutes) + ',' +
           std::to_string(r.hints_used) + ',' + std::to_string(r.mistakes) + ',' +
           std::to_string(r.mistake_budget) + ',' + std::to_string(r.guess_count) + ',' +
           (r.rating ? std::to_string(*r.rating) : std::string()) + ',' +
           detail::csv_field(r.participant_id) + ',' + format_timestamp(r.recorded_at) + '\n';
  }
  return out;
}

inline std::vector<SessionRecord> records_from_csv(std::string_view text) {
  auto rows = detail::parse_csv(text);
  if (rows.empty()) throw Error(ErrorCode::InvalidArgument, "CSV has no header");
  std::string header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header += (i ? "," : "") + rows[0][i];
  if (header != kRecordCsvHeader) throw Error(ErrorCode::InvalidArgument, "unexpected record CSV header");

  std::vector<SessionRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 13) {
      throw Error(ErrorCode::InvalidArgument, "CSV row " + std::to_string(i) + " has " +
                                                  std::to_string(f.size()) + " fields");
    }
    try {
      SessionRecord r;
      r.session_id = f[0];
      r.puzzle_id = f[1];
      auto cond = condition_from_string(f[2]);
      if (!cond) throw Error(ErrorCode::InvalidArgument, "unknown condition '" + f[2] + "'");
      r.condition = *cond;
      if (f[3] != "true" && f[3] != "false") throw Error(ErrorCode::InvalidArgument, "bad correct flag");
      r.correct = f[3] == "true";
      r.outcome = session_state_from_string(f[4]);
      r.elapsed_minutes = nlohmann::json::parse(f[5]).get<double>();
      r.hints_used = std::stoi(f[6]);
      r.mistakes = std::stoi(f[7]);
      r.mistake_budget = std::stoi(f[8]);
      r.guess_count = std::stoi(f[9]);
      if (!f[10].empty()) r.rating = std::stoi(f[10]);
      r.participant_id = f[11];
      r.recorded_at = parse_timestamp(f[12]);
      r.check();
      out.push_back(std::move(r));
    } catch (const std::logic_error& ex) {
      throw Error(ErrorCode::InvalidArgument, "CSV row " + std::to_string(i) + ": " + ex.what());
    }
  }
  return out;
}

inline std::string aggregate_to_csv(const StudyAggregate& agg) {
  std::string out(kAggregateCsvHeader);
  out += '\n';
  for (const auto& s : agg.conditions) {
    out += std::string(to_string(s.condition)) + ',' + std::to_string(s.n) + ',' +
           (s.avg_difficulty ? detail::number_text(*s.avg_difficulty) : std::string()) + ',' +
           detail::number_text(s.correctness_rate) + ',' + detail::number_text(s.avg_hints) + ',' +
           detail::number_text(s.avg_time_minutes) + '\n';
  }
  return out;
}

inline nlohmann::json records_to_json(std::span<const SessionRecord> records) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) arr.push_back(to_json(r));
  return arr;
}

enum class ExportFormat { Csv, Json };

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

inline std::string export_records(std::span<const SessionRecord> records, ExportFormat fmt) {
  return fmt == ExportFormat::Csv ? records_to_csv(records) : records_to_json(records).dump(2) + "\n";
}

inline std::string export_aggregate(const StudyAggregate& agg, ExportFormat fmt) {
  return fmt == ExportFormat::Csv ? aggregate_to_csv(agg) : to_json(agg).dump(2) + "\n";
}

}  // namespace connections
