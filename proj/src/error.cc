/*
 * Copyright (C) 2026 The medreply Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "medreply/error.h"

namespace medreply {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kDuplicateTurn: return "DuplicateTurn";
    case ErrorCode::kTooFewInstances: return "TooFewInstances";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kMalformedVector: return "MalformedVector";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kBadK: return "BadK";
    case ErrorCode::kBadRange: return "BadRange";
    case ErrorCode::kInsufficientDiversity: return "InsufficientDiversity";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kEmptyFeasible: return "EmptyFeasible";
    case ErrorCode::kEmptyIndex: return "EmptyIndex";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kArtifactsMissing: return "ArtifactsMissing";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
      code_(code) {}

}  // namespace medreply
