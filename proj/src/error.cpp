// Copyright 2026 The qrng-tunnel Authors.
// SPDX-License-Identifier: Apache-2.0

#include "qrng/error.hpp"

namespace qrng {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kUnsupportedConfiguration: return "unsupported configuration";
    case ErrorCode::kFitFailure: return "fit failure";
    case ErrorCode::kInsufficientData: return "insufficient data";
    case ErrorCode::kUnreachableTarget: return "unreachable target";
    case ErrorCode::kOutputTooShort: return "output too short";
    case ErrorCode::kTooShort: return "input too short";
    case ErrorCode::kUndefinedVariance: return "undefined variance";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kIo: return "i/o error";
  }
  return "unknown error";
}

}  // namespace qrng
