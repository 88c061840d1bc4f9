// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace phred {

enum class ErrorCode {
  Structure,
  Evaluation,
  Rank,
  Orientation,
  ShiftCollision,
  DegenerateDirections,
  Linearization,
  Convergence,
  Divergence,
  Comparison,
  Estimation,
  Selection,
  Config,
  Io,
};

const char* to_string(ErrorCode code);

/// Exception type for every failure raised by the library. The optional
/// stage names the pipeline step (e.g. "deim", "basis:pod") for CLI reports.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, std::string stage = {})
      : std::runtime_error(what), code_(code), stage_(std::move(stage)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }

  /// Copy of this error tagged with a stage (keeps an existing tag).
  Error with_stage(const std::string& stage) const {
    return Error(code_, what(), stage_.empty() ? stage : stage_);
  }

  bool is_config_error() const noexcept {
    return code_ == ErrorCode::Config || code_ == ErrorCode::Io;
  }

 private:
  ErrorCode code_;
  std::string stage_;
};

}  // namespace phred
