/*
 * Copyright 2026 The fluidrx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FLUIDRX_ERROR_HPP_
#define FLUIDRX_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace fluidrx {

enum class ErrorCode {
  kInvalidArgument,
  kIoError,
  kParseError,
  // dataset
  kUnknownColumn,
  kMissingColumn,
  kNonNumericCell,
  kMissingLabelColumn,
  kAllMissingFeature,
  kScalerNotFitted,
  kClassTooSmall,
  kInvalidSpec,
  // models
  kDimensionMismatch,
  kNonFiniteLoss,
  kSingleClassDataset,
  kEmptyIndirectBlock,
  // feature selection
  kEmptyFeatureSet,
  // optimizer
  kNegativeBudget,
  kNonFiniteGradient,
  // service
  kInconsistentBundle,
  kNonFiniteInput,
  kNotFound,
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kUnknownColumn: return "UnknownColumn";
    case ErrorCode::kMissingColumn: return "MissingColumn";
    case ErrorCode::kNonNumericCell: return "NonNumericCell";
    case ErrorCode::kMissingLabelColumn: return "MissingLabelColumn";
    case ErrorCode::kAllMissingFeature: return "AllMissingFeature";
    case ErrorCode::kScalerNotFitted: return "ScalerNotFitted";
    case ErrorCode::kClassTooSmall: return "ClassTooSmall";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kSingleClassDataset: return "SingleClassDataset";
    case ErrorCode::kEmptyIndirectBlock: return "EmptyIndirectBlock";
    case ErrorCode::kEmptyFeatureSet: return "EmptyFeatureSet";
    case ErrorCode::kNegativeBudget: return "NegativeBudget";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kInconsistentBundle: return "InconsistentBundle";
    case ErrorCode::kNonFiniteInput: return "NonFiniteInput";
    case ErrorCode::kNotFound: return "NotFound";
  }
  return "Unknown";
}

// All library failures surface as fluidrx::Error carrying a machine-readable
// code; the message is meant for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void Require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

inline void RequireSize(std::size_t actual, std::size_t expected,
                        std::string_view what) {
  if (actual != expected) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": expected " + std::to_string(expected) +
                    ", got " + std::to_string(actual));
  }
}

}  // namespace fluidrx

#endif  // FLUIDRX_ERROR_HPP_
