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
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "connections/embedding.hpp"
#include "connections/error.hpp"
#include "connections/puzzle.hpp"

namespace connections {

// Pair sums accumulate in long double.
using Accum = long double;

/// dot(u, v) / (|u| |v|), clamped to [-1, 1].
inline double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim()) {
    throw Error(ErrorCode::DimensionMismatch,
                "cosine of dim " + std::to_string(u.dim()) + " and " + std::to_string(v.dim()));
  }
  Accum dot = 0, uu = 0, vv = 0;
  for (std::size_t i = 0; i < u.dim(); ++i) {
    dot += static_cast<Accum>(u[i]) * v[i];
    uu += static_cast<Accum>(u[i]) * u[i];
    vv += static_cast<Accum>(v[i]) * v[i];
  }
  if (uu == 0 || vv == 0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  Accum c = dot / (std::sqrt(uu) * std::sqrt(vv));
  return static_cast<double>(std::clamp<Accum>(c, -1, 1));
}

/// Mean cosine over the unordered pairs of one category's vectors.
inline double category_cohesion(std::span<const EmbeddingVector> vectors) {
  if (vectors.size() != kWordsPerCategory) {
    throw Error(ErrorCode::InvalidArgument,
                "category cohesion needs 4 vectors, got " + std::to_string(vectors.size()));
  }
  Accum sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t j = i + 1; j < vectors.size(); ++j) {
      sum += cosine(vectors[i], vectors[j]);
      ++pairs;
    }
  }
  return static_cast<double>(sum / pairs);
}

struct PuzzleMetrics {
  std::vector<double> category_cohesion;  // puzzle order
  double cohesion = 0.0;                  // unweighted mean of category_cohesion
  double ambiguity = 0.0;                 // mean cosine over cross-category pairs
  std::size_t within_pairs = 0;
  std::size_t across_pairs = 0;
};

namespace detail {

inline std::vector<std::vector<EmbeddingVector>> lookup_vectors(const Puzzle& puzzle,
                                                                const EmbeddingMap& embeddings) {
  std::vector<std::vector<EmbeddingVector>> out;
  out.reserve(puzzle.categories.size());
  for (const auto& cat : puzzle.categories) {
    std::vector<EmbeddingVector> vs;
    vs.reserve(cat.words.size());
    for (const auto& w : cat.words) {
      auto it = embeddings.find(w.key());
      if (it == embeddings.end()) {
        throw Error(ErrorCode::MissingEmbedding, "no embedding for '" + w.key() + "'", w.key());
      }
      vs.push_back(it->second);
    }
    out.push_back(std::move(vs));
  }
  return out;
}

}  // namespace detail

/// Per-category cohesion in puzzle order and their unweighted mean.
inline std::pair<std::vector<double>, double> puzzle_cohesion(const Puzzle& puzzle,
                                                              const EmbeddingMap& embeddings) {
  auto vectors = detail::lookup_vectors(puzzle, embeddings);
  std::vector<double> per;
  Accum total = 0;
  for (const auto& vs : vectors) {
    per.push_back(category_cohesion(vs));
    total += per.back();
  }
  double mean = per.empty() ? 0.0 : static_cast<double>(total / per.size());
  return {std::move(per), mean};
}

namespace detail {

struct CrossSum {
  Accum sum = 0;
  std::size_t pairs = 0;
};

inline CrossSum cross_category_sum(const std::vector<std::vector<EmbeddingVector>>& vectors) {
  CrossSum cs;
  for (std::size_t a = 0; a < vectors.size(); ++a) {
    for (std::size_t b = a + 1; b < vectors.size(); ++b) {
      for (const auto& u : vectors[a]) {
        for (const auto& v : vectors[b]) {
          cs.sum += cosine(u, v);
          ++cs.pairs;
        }
      }
    }
  }
  return cs;
}

}  // namespace detail

/// Mean cosine over every pair of words drawn from two different categories.
inline double puzzle_ambiguity(const Puzzle& puzzle, const EmbeddingMap& embeddings) {
  auto cs = detail::cross_category_sum(detail::lookup_vectors(puzzle, embeddings));
  if (cs.pairs == 0) throw Error(ErrorCode::InvalidPuzzle, "puzzle has no cross-category pairs");
  return static_cast<double>(cs.sum / cs.pairs);
}

inline PuzzleMetrics compute_metrics(const Puzzle& puzzle, const EmbeddingMap& embeddings) {
  auto report = validate(puzzle);
  if (!report.ok()) throw Error(ErrorCode::InvalidPuzzle, report.violations.front().describe());

  auto vectors = detail::lookup_vectors(puzzle, embeddings);
  PuzzleMetrics m;
  Accum total = 0;
  for (const auto& vs : vectors) {
    m.category_cohesion.push_back(category_cohesion(vs));
    m.within_pairs += vs.size() * (vs.size() - 1) / 2;
    total += m.category_cohesion.back();
  }
  m.cohesion = static_cast<double>(total / m.category_cohesion.size());
  auto cs = detail::cross_category_sum(vectors);
  m.ambiguity = static_cast<double>(cs.sum / cs.pairs);
  m.across_pairs = cs.pairs;
  return m;
}

// ---------------------------------------------------------------------------
// Corpus aggregation

/// Row label for the model column: "Official Games" for human-made puzzles.
inline std::string model_label(const PuzzleProvenance& p) {
  if (p.source == PuzzleSource::Human) return "Official Games";
  return p.model_id.value_or("unknown");
}

/// Prompt-type column: Human / Role / Zero.
inline std::string prompt_type_label(Condition c) {
  switch (c) {
    case Condition::RealGame: return "Human";
    case Condition::RoleInjected: return "Role";
    case Condition::ZeroShot: return "Zero";
  }
  return "?";
}

struct TaggedMetrics {
  std::string puzzle_id;
  PuzzleProvenance provenance;
  PuzzleMetrics metrics;
};

struct CorpusRow {
  std::string model;
  Condition condition = Condition::RealGame;
  double avg_cohesion = 0.0;
  double avg_ambiguity = 0.0;
  std::size_t n = 0;
};

struct CorpusMetrics {
  std::vector<CorpusRow> rows;  // first-appearance order of (model, condition)
};

inline CorpusMetrics corpus_report(std::span<const TaggedMetrics> tagged) {
  if (tagged.empty()) throw Error(ErrorCode::EmptyCorpus, "no puzzles to report");
  struct Sums {
    std::string model;
    Condition condition;
    Accum cohesion = 0, ambiguity = 0;
    std::size_t n = 0;
  };
  std::vector<Sums> groups;
  for (const auto& t : tagged) {
    auto model = model_label(t.provenance);
    auto cond = condition_of(t.provenance);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const Sums& s) {
      return s.model == model && s.condition == cond;
    });
    if (it == groups.end()) {
      groups.push_back({model, cond});
      it = std::prev(groups.end());
    }
    it->cohesion += t.metrics.cohesion;
    it->ambiguity += t.metrics.ambiguity;
    ++it->n;
  }
  CorpusMetrics out;
  for (const auto& g : groups) {
    out.rows.push_back({g.model, g.condition, static_cast<double>(g.cohesion / g.n),
                        static_cast<double>(g.ambiguity / g.n), g.n});
  }
  return out;
}

inline nlohmann::json to_json(const CorpusMetrics& cm) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : cm.rows) {
    rows.push_back({{"model", r.model},
                    {"prompt_type", to_string(r.condition)},
                    {"avg_cohesion", r.avg_cohesion},
                    {"avg_ambiguity", r.avg_ambiguity},
                    {"n", r.n}});
  }
  return {{"rows", rows}};
}

inline CorpusMetrics corpus_from_json(const nlohmann::json& j) {
  CorpusMetrics cm;
  for (const auto& r : j.at("rows")) {
    auto cond = condition_from_string(r.at("prompt_type").get<std::string>());
    if (!cond) throw Error(ErrorCode::InvalidArgument, "unknown prompt_type in metrics row");
    cm.rows.push_back({r.at("model").get<std::string>(), *cond, r.at("avg_cohesion").get<double>(),
                       r.at("avg_ambiguity").get<double>(), r.at("n").get<std::size_t>()});
  }
  return cm;
}

inline nlohmann::json to_json(const TaggedMetrics& t) {
  return {{"puzzle_id", t.puzzle_id},
          {"model", model_label(t.provenance)},
          {"prompt_type", to_string(condition_of(t.provenance))},
          {"category_cohesion", t.metrics.category_cohesion},
          {"cohesion", t.metrics.cohesion},
          {"ambiguity", t.metrics.ambiguity},
          {"within_pairs", t.metrics.within_pairs},
          {"across_pairs", t.metrics.across_pairs}};
}

inline std::string format_fixed(double v, int decimals = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

/// Plain-text table with the columns Model, Prompt Type, Avg Cohesion,
/// Avg Ambiguity, n. The model cell is blank when it repeats the row above.
inline std::string render_table(const CorpusMetrics& cm) {
  std::vector<std::vector<std::string>> cells{{"Model", "Prompt Type", "Avg Cohesion", "Avg Ambiguity", "n"}};
  std::string prev;
  for (const auto& r : cm.rows) {
    cells.push_back({r.model == prev ? "" : r.model, prompt_type_label(r.condition),
                     format_fixed(r.avg_cohesion), format_fixed(r.avg_ambiguity), std::to_string(r.n)});
    prev = r.model;
  }
  std::vector<std::size_t> width(5, 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out += row[i];
      if (i + 1 < row.size()) out += std::string(width[i] - row[i].size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

inline std::string render_csv(const CorpusMetrics& cm) {
  std::string out = "model,prompt_type,avg_cohesion,avg_ambiguity,n\n";
  for (const auto& r : cm.rows) {
    std::string model = r.model;
    if (model.find_first_of(",\"\n") != std::string::npos) {
      std::string q = "\"";
      for (char c : model) {
        if (c == '"') q += '"';
        q += c;
      }
      model = q + "\"";
    }
    out += model + "," + std::string(to_string(r.condition)) + "," + nlohmann::json(r.avg_cohesion).dump() +
           "," + nlohmann::json(r.avg_ambiguity).dump() + "," + std::to_string(r.n) + "\n";
  }
  return out;
}

}  // namespace connections
