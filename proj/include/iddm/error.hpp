// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace iddm {

enum class ErrorCode {
  kFileNotFound,
  kUnsupportedFormat,
  kCorruptStream,
  kUnwritable,
  kInvalidArgument,
  kShapeMismatch,
  kOutOfRange,
  kNoTrace,
  kNotInitialized,
  kNumerical,
  kArchitectureMismatch,
  kEmptySource,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFileNotFound: return "file not found";
    case ErrorCode::kUnsupportedFormat: return "unsupported format";
    case ErrorCode::kCorruptStream: return "corrupt stream";
    case ErrorCode::kUnwritable: return "unwritable path";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kShapeMismatch: return "shape mismatch";
    case ErrorCode::kOutOfRange: return "out of range";
    case ErrorCode::kNoTrace: return "no recorded trace";
    case ErrorCode::kNotInitialized: return "not initialized";
    case ErrorCode::kNumerical: return "numerical failure";
    case ErrorCode::kArchitectureMismatch: return "architecture mismatch";
    case ErrorCode::kEmptySource: return "empty data source";
  }
  return "unknown error";
}

#define IDDM_CHECK(cond, code, msg)                  \
  do {                                               \
    if (!(cond)) throw ::iddm::Error((code), (msg)); \
  } while (0)

}  // namespace iddm
