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
#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "connections/clock.hpp"
#include "connections/detail/json_tree.hpp"
#include "connections/error.hpp"
#include "connections/word.hpp"

namespace connections {

inline constexpr std::size_t kCategoriesPerPuzzle = 4;
inline constexpr std::size_t kWordsPerCategory = 4;
inline constexpr std::size_t kWordsPerPuzzle = kCategoriesPerPuzzle * kWordsPerCategory;

enum class PromptKind { ZeroShot, RoleInjected };
enum class PuzzleSource { Human, Model };

/// Grouping label for reports and study records.
enum class Condition { RoleInjected, ZeroShot, RealGame };

inline std::string_view to_string(PromptKind k) {
  return k == PromptKind::ZeroShot ? "zero_shot" : "role_injected";
}
inline std::string_view to_string(PuzzleSource s) {
  return s == PuzzleSource::Human ? "human" : "model";
}
inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::RoleInjected: return "role_injected";
    case Condition::ZeroShot: return "zero_shot";
    case Condition::RealGame: return "real_game";
  }
  return "unknown";
}

inline std::optional<Condition> condition_from_string(std::string_view s) {
  if (s == "role_injected" || s == "role") return Condition::RoleInjected;
  if (s == "zero_shot" || s == "zero") return Condition::ZeroShot;
  if (s == "real_game" || s == "real" || s == "human") return Condition::RealGame;
  return std::nullopt;
}

inline std::optional<PromptKind> prompt_kind_from_string(std::string_view s) {
  if (s == "zero" || s == "zero_shot") return PromptKind::ZeroShot;
  if (s == "role" || s == "role_injected") return PromptKind::RoleInjected;
  return std::nullopt;
}

struct PuzzleProvenance {
  PuzzleSource source = PuzzleSource::Human;
  std::optional<PromptKind> prompt_kind;  // nullopt: not applicable
  std::optional<std::string> model_id;
  Timestamp created_at{};

  static PuzzleProvenance human() { return {}; }
  static PuzzleProvenance model(PromptKind kind, std::string model_id, Timestamp at = {}) {
    return {PuzzleSource::Model, kind, std::move(model_id), at};
  }

  friend bool operator==(const PuzzleProvenance&, const PuzzleProvenance&) = default;
};

inline Condition condition_of(const PuzzleProvenance& p) {
  if (p.source == PuzzleSource::Human) return Condition::RealGame;
  if (!p.prompt_kind) {
    throw Error(ErrorCode::InvalidArgument, "model-sourced puzzle without a prompt kind");
  }
  return *p.prompt_kind == PromptKind::ZeroShot ? Condition::ZeroShot : Condition::RoleInjected;
}

struct Category {
  std::string name;
  std::vector<Word> words;

  friend bool operator==(const Category&, const Category&) = default;
};

struct Puzzle {
  std::vector<Category> categories;
  PuzzleProvenance provenance;

  /// Content equality, provenance ignored.
  bool same_content(const Puzzle& other) const { return categories == other.categories; }

  friend bool operator==(const Puzzle&, const Puzzle&) = default;
};

// ---------------------------------------------------------------------------
// Validation

enum class ViolationKind {
  WrongCategoryCount,
  WrongWordCount,
  DuplicateWord,
  DuplicateCategoryName,
  EmptyWord,
  EmptyCategoryName,
  InconsistentProvenance,
};

inline std::string_view to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::WrongCategoryCount: return "WrongCategoryCount";
    case ViolationKind::WrongWordCount: return "WrongWordCount";
    case ViolationKind::DuplicateWord: return "DuplicateWord";
    case ViolationKind::DuplicateCategoryName: return "DuplicateCategoryName";
    case ViolationKind::EmptyWord: return "EmptyWord";
    case ViolationKind::EmptyCategoryName: return "EmptyCategoryName";
    case ViolationKind::InconsistentProvenance: return "InconsistentProvenance";
  }
  return "Unknown";
}

struct Violation {
  ViolationKind kind;
  std::string subject;    // category name or word key; empty when not applicable
  std::size_t count = 0;  // observed count for the *Count kinds

  std::string describe() const {
    std::string out(to_string(kind));
    switch (kind) {
      case ViolationKind::WrongCategoryCount:
        out += "(" + std::to_string(count) + ")";
        break;
      case ViolationKind::WrongWordCount:
        out += "(\"" + subject + "\", " + std::to_string(count) + ")";
        break;
      default:
        if (!subject.empty()) out += "(\"" + subject + "\")";
    }
    return out;
  }

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind k) const {
    for (const auto& v : violations)
      if (v.kind == k) return true;
    return false;
  }
};

/// Lists every violated puzzle invariant, in a deterministic order: category
/// count, then per-category checks in puzzle order, then cross-puzzle word
/// duplicates, then provenance.
inline ValidationReport validate(const Puzzle& puzzle) {
  ValidationReport report;
  auto& out = report.violations;

  if (puzzle.categories.size() != kCategoriesPerPuzzle) {
    out.push_back({ViolationKind::WrongCategoryCount, {}, puzzle.categories.size()});
  }

  std::set<std::string> names;
  for (const auto& cat : puzzle.categories) {
    if (normalize_key(cat.name).empty()) {
      out.push_back({ViolationKind::EmptyCategoryName, cat.name, 0});
    } else if (!names.insert(cat.name).second) {
      out.push_back({ViolationKind::DuplicateCategoryName, cat.name, 0});
    }
    if (cat.words.size() != kWordsPerCategory) {
      out.push_back({ViolationKind::WrongWordCount, cat.name, cat.words.size()});
    }
    for (const auto& w : cat.words) {
      if (w.key().empty()) out.push_back({ViolationKind::EmptyWord, cat.name, 0});
    }
  }

  std::set<std::string> seen;
  std::set<std::string> reported;
  for (const auto& cat : puzzle.categories) {
    for (const auto& w : cat.words) {
      if (w.key().empty()) continue;
      if (!seen.insert(w.key()).second && reported.insert(w.key()).second) {
        out.push_back({ViolationKind::DuplicateWord, w.key(), 0});
      }
    }
  }

  const auto& p = puzzle.provenance;
  if (p.source == PuzzleSource::Human && p.prompt_kind) {
    out.push_back({ViolationKind::InconsistentProvenance, "human source with a prompt kind", 0});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline Puzzle puzzle_from_tree(const JsonTree& obj, const PuzzleProvenance& provenance) {
  if (obj.kind != JsonTree::Kind::Object) {
    throw Error(ErrorCode::MalformedJson, "puzzle must be a JSON object");
  }
  std::set<std::string> names;
  for (const auto& k : obj.keys) {
    if (!names.insert(k).second) {
      throw Error(ErrorCode::DuplicateCategoryName, "category name '" + k + "' repeats", k);
    }
  }
  if (obj.keys.size() != kCategoriesPerPuzzle) {
    throw Error(ErrorCode::WrongCategoryCount,
                "expected 4 categories, got " + std::to_string(obj.keys.size()),
                std::to_string(obj.keys.size()));
  }

  Puzzle puzzle;
  puzzle.provenance = provenance;
  for (std::size_t i = 0; i < obj.keys.size(); ++i) {
    const auto& name = obj.keys[i];
    const auto& arr = obj.children[i];
    if (normalize_key(name).empty()) {
      throw Error(ErrorCode::MalformedJson, "empty category name");
    }
    if (arr.kind != JsonTree::Kind::Array) {
      throw Error(ErrorCode::MalformedJson, "category '" + name + "' must map to an array", name);
    }
    if (arr.children.size() != kWordsPerCategory) {
      throw Error(ErrorCode::WrongWordCount,
                  "category '" + name + "' has " + std::to_string(arr.children.size()) +
                      " words",
                  name);
    }
    Category cat{name, {}};
    for (const auto& el : arr.children) {
      if (el.kind != JsonTree::Kind::String) {
        throw Error(ErrorCode::MalformedJson, "words in '" + name + "' must be strings", name);
      }
      Word w(el.text);
      if (w.key().empty()) {
        throw Error(ErrorCode::MalformedJson, "empty word in '" + name + "'", name);
      }
      cat.words.push_back(std::move(w));
    }
    puzzle.categories.push_back(std::move(cat));
  }

  std::set<std::string> keys;
  for (const auto& cat : puzzle.categories) {
    for (const auto& w : cat.words) {
      if (!keys.insert(w.key()).second) {
        throw Error(ErrorCode::DuplicateWord, "word '" + w.key() + "' repeats", w.key());
      }
    }
  }
  return puzzle;
}

}  // namespace detail

/// Strict parse of a puzzle document: a single category-name -> 4-word
/// object, or an array of such objects. Throws `Error` on the first violation.
inline std::vector<Puzzle> parse_puzzle_document(std::string_view text,
                                                 const PuzzleProvenance& provenance = {}) {
  detail::JsonTree root = detail::parse_json_tree(text);
  std::vector<Puzzle> out;
  if (root.kind == detail::JsonTree::Kind::Object) {
    out.push_back(detail::puzzle_from_tree(root, provenance));
  } else if (root.kind == detail::JsonTree::Kind::Array) {
    for (const auto& el : root.children) out.push_back(detail::puzzle_from_tree(el, provenance));
  } else {
    throw Error(ErrorCode::MalformedJson, "document must be an object or an array of objects");
  }
  return out;
}

/// Structural read without invariant checks, for reporting every violation
/// through `validate`. Only non-JSON input and non-object/array/string shapes
/// are errors here.
inline std::vector<Puzzle> read_puzzle_document_unchecked(std::string_view text,
                                                          const PuzzleProvenance& provenance = {}) {
  using detail::JsonTree;
  JsonTree root = detail::parse_json_tree(text);
  std::vector<const JsonTree*> objects;
  if (root.kind == JsonTree::Kind::Object) {
    objects.push_back(&root);
  } else if (root.kind == JsonTree::Kind::Array) {
    for (const auto& el : root.children) objects.push_back(&el);
  } else {
    throw Error(ErrorCode::MalformedJson, "document must be an object or an array of objects");
  }
  std::vector<Puzzle> out;
  for (const auto* obj : objects) {
    if (obj->kind != JsonTree::Kind::Object) {
      throw Error(ErrorCode::MalformedJson, "puzzle must be a JSON object");
    }
    Puzzle p;
    p.provenance = provenance;
    for (std::size_t i = 0; i < obj->keys.size(); ++i) {
      const auto& arr = obj->children[i];
      if (arr.kind != JsonTree::Kind::Array) {
        throw Error(ErrorCode::MalformedJson, "category '" + obj->keys[i] + "' must map to an array",
                    obj->keys[i]);
      }
      Category cat{obj->keys[i], {}};
      for (const auto& el : arr.children) {
        if (el.kind != JsonTree::Kind::String) {
          throw Error(ErrorCode::MalformedJson, "words in '" + cat.name + "' must be strings", cat.name);
        }
        cat.words.emplace_back(el.text);
      }
      p.categories.push_back(std::move(cat));
    }
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

/// Category-name -> word-array object, keys in category order, one category
/// per line.
inline std::string canonical_serialize(const Puzzle& puzzle) {
  std::string out = "{\n";
  for (std::size_t i = 0; i < puzzle.categories.size(); ++i) {
    const auto& cat = puzzle.categories[i];
    out += "  " + nlohmann::json(cat.name).dump() + ": [";
    for (std::size_t j = 0; j < cat.words.size(); ++j) {
      if (j) out += ", ";
      out += nlohmann::json(cat.words[j].display()).dump();
    }
    out += "]";
    if (i + 1 < puzzle.categories.size()) out += ",";
    out += "\n";
  }
  out += "}";
  return out;
}

inline std::string serialize_document(const std::vector<Puzzle>& puzzles) {
  std::string out = "[\n";
  for (std::size_t i = 0; i < puzzles.size(); ++i) {
    out += canonical_serialize(puzzles[i]);
    if (i + 1 < puzzles.size()) out += ",";
    out += "\n";
  }
  out += "]\n";
  return out;
}

/// Stable content id: FNV-1a 64 over the canonical serialization, hex.
inline std::string puzzle_id(const Puzzle& puzzle) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_serialize(puzzle)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::vector<std::string> all_keys(const Puzzle& puzzle) {
  std::vector<std::string> keys;
  for (const auto& c : puzzle.categories)
    for (const auto& w : c.words) keys.push_back(w.key());
  return keys;
}

}  // namespace connections
