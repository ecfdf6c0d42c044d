// Copyright 2026 The fib Authors
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

#ifndef FIB_ERROR_H_
#define FIB_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace fib {

enum class ErrorCode {
  kSchema,
  kConstraintGrammar,
  kMissingAxis,
  kConstAxisOverridden,
  kConstraintViolated,
  kUnboundName,
  kNonIntegerTensorIndexed,
  kIndexOutOfRange,
  kArchiveMissingKey,
  kDTypeMismatch,
  kShapeMismatch,
  kCorruptHeader,
  kTruncatedPayload,
  kUnsupportedOpType,
  kDegenerateDistribution,
  kLengthMismatch,
  kSamplerCrashed,
  kProtocol,
  kSchedulerStalled,
  kEmptyEvalSet,
  kNoPassingSolution,
  kEmptyDataset,
  kIo,
};

std::string_view error_code_name(ErrorCode code);

// All library failures surface as this exception. `path()` is set for schema
// errors (dotted field path such as "inputs.A.shape") and empty otherwise.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string path = {});

  ErrorCode code() const { return code_; }
  const std::string& path() const { return path_; }

 private:
  ErrorCode code_;
  std::string path_;
};

[[noreturn]] void throw_schema(const std::string& path,
                               const std::string& reason);

}  // namespace fib

#endif  // FIB_ERROR_H_
