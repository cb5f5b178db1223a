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

#ifndef MEDREPLY_ERROR_H_
#define MEDREPLY_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace medreply {

enum class ErrorCode {
  kMalformedRecord,
  kDuplicateTurn,
  kTooFewInstances,
  kInvalidSpec,
  kDimMismatch,
  kMalformedVector,
  kEmptyCorpus,
  kLengthMismatch,
  kBadK,
  kBadRange,
  kInsufficientDiversity,
  kSingleClass,
  kEmptyFeasible,
  kEmptyIndex,
  kEmptyDataset,
  kEmptyInput,
  kArtifactsMissing,
  kIo,
  kInvalidArgument,
};

std::string_view ErrorCodeName(ErrorCode code);

// All library failures surface as this exception. The code identifies the
// contract violation; the message carries location details (line numbers,
// ids) for operators.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace medreply

#endif  // MEDREPLY_ERROR_H_
