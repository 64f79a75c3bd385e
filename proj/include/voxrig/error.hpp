// Copyright Contributors to the voxrig project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace voxrig {

enum class ErrorCode {
  kPointBehindCamera,
  kGimbalLock,
  kDegenerateConfiguration,
  kBehindCamera,
  kInvalidStep,
  kShapeMismatch,
  kIndivisibleSize,
  kSingularAffine,
  kDegenerateVariance,
  kKeypointOutOfBounds,
  kNonFiniteDepth,
  kDegenerateDistance,
  kIo,
  kMalformedManifest,
  kGridSizeMismatch,
  kNonFinite,
  kInvalidSpec,
  kInconsistentParts,
  kInvalidArgument,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace voxrig
