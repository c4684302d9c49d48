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

#include <stdexcept>
#include <string>
#include <string_view>

namespace connections {

enum class ErrorCode {
  // puzzle-core
  MalformedJson,
  WrongCategoryCount,
  WrongWordCount,
  DuplicateWord,
  DuplicateCategoryName,
  // generation
  NoJsonFound,
  GenerationFailed,
  TransportError,
  // embedding
  ProviderUnavailable,
  DimensionMismatch,
  ZeroVector,
  CorruptCache,
  IoError,
  // metrics
  MissingEmbedding,
  EmptyCorpus,
  // game-engine
  InvalidPuzzle,
  SessionEnded,
  NoHintLeft,
  AlreadyRated,
  SessionStillInProgress,
  RatingOutOfRange,
  RatingNotAllowed,
  // study
  DuplicateRecord,
  UnknownRecord,
  // misc
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedJson: return "MalformedJson";
    case ErrorCode::WrongCategoryCount: return "WrongCategoryCount";
    case ErrorCode::WrongWordCount: return "WrongWordCount";
    case ErrorCode::DuplicateWord: return "DuplicateWord";
    case ErrorCode::DuplicateCategoryName: return "DuplicateCategoryName";
    case ErrorCode::NoJsonFound: return "NoJsonFound";
    case ErrorCode::GenerationFailed: return "GenerationFailed";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::CorruptCache: return "CorruptCache";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::InvalidPuzzle: return "InvalidPuzzle";
    case ErrorCode::SessionEnded: return "SessionEnded";
    case ErrorCode::NoHintLeft: return "NoHintLeft";
    case ErrorCode::AlreadyRated: return "AlreadyRated";
    case ErrorCode::SessionStillInProgress: return "SessionStillInProgress";
    case ErrorCode::RatingOutOfRange: return "RatingOutOfRange";
    case ErrorCode::RatingNotAllowed: return "RatingNotAllowed";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::UnknownRecord: return "UnknownRecord";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Base exception for every failure raised by the library. `subject()` holds
/// the offending item (a word key, category name, session id) when there is one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string subject = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        subject_(std::move(subject)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorCode code_;
  std::string subject_;
};

}  // namespace connections
