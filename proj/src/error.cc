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

#include "fib/error.h"

namespace fib {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kConstraintGrammar: return "ConstraintGrammarError";
    case ErrorCode::kMissingAxis: return "MissingAxis";
    case ErrorCode::kConstAxisOverridden: return "ConstAxisOverridden";
    case ErrorCode::kConstraintViolated: return "ConstraintViolated";
    case ErrorCode::kUnboundName: return "UnboundName";
    case ErrorCode::kNonIntegerTensorIndexed: return "NonIntegerTensorIndexed";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kArchiveMissingKey: return "ArchiveMissingKey";
    case ErrorCode::kDTypeMismatch: return "DTypeMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kCorruptHeader: return "CorruptHeader";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kUnsupportedOpType: return "UnsupportedOpType";
    case ErrorCode::kDegenerateDistribution: return "DegenerateDistribution";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kSamplerCrashed: return "SamplerCrashed";
    case ErrorCode::kProtocol: return "ProtocolError";
    case ErrorCode::kSchedulerStalled: return "SchedulerStalled";
    case ErrorCode::kEmptyEvalSet: return "EmptyEvalSet";
    case ErrorCode::kNoPassingSolution: return "NoPassingSolution";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kIo: return "IoError";
  }
  return "Error";
}

namespace {

std::string format_message(ErrorCode code, const std::string& message,
                           const std::string& path) {
  std::string out(error_code_name(code));
  if (!path.empty()) out += " at " + path;
  out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, std::string path)
    : std::runtime_error(format_message(code, message, path)),
      code_(code),
      path_(std::move(path)) {}

void throw_schema(const std::string& path, const std::string& reason) {
  throw Error(ErrorCode::kSchema, reason, path);
}

}  // namespace fib
