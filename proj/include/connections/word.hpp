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

#include <string>
#include <string_view>

#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace connections {

/// Normalized comparison key for a word: Unicode whitespace trimmed from both
/// ends, then full default case folding. Idempotent.
inline std::string normalize_key(std::string_view text) {
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  int32_t begin = 0;
  int32_t end = u.length();
  while (begin < end) {
    UChar32 c = u.char32At(begin);
    if (!u_isUWhiteSpace(c)) break;
    begin += U16_LENGTH(c);
  }
  while (end > begin) {
    int32_t prev = u.moveIndex32(end, -1);
    if (!u_isUWhiteSpace(u.char32At(prev))) break;
    end = prev;
  }
  icu::UnicodeString trimmed(u, begin, end - begin);
  trimmed.foldCase(U_FOLD_CASE_DEFAULT);
  std::string out;
  trimmed.toUTF8String(out);
  return out;
}

/// A puzzle word. `display` keeps the generated spelling ("ScapeGOAT");
/// uniqueness and matching use `key`.
class Word {
 public:
  Word() = default;
  explicit Word(std::string display)
      : display_(std::move(display)), key_(normalize_key(display_)) {}

  const std::string& display() const noexcept { return display_; }
  const std::string& key() const noexcept { return key_; }

  friend bool operator==(const Word& a, const Word& b) {
    return a.display_ == b.display_;
  }

 private:
  std::string display_;
  std::string key_;
};

}  // namespace connections
