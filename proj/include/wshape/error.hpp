#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wshape {

enum class ErrorCode {
  MissingProjection,
  ShapeMismatch,
  UnreadableFile,
  IoFailure,
  DuplicateName,
  NonFinite,
  RankTooLarge,
  RankMismatch,
  ZeroNorm,
  LengthMismatch,
  TooFewSamples,
  DegenerateSamples,
  IncompleteTable,
  ShapeError,
  InvalidConfig,
};

std::string_view error_code_name(ErrorCode code);

/// All library failures are reported through this exception; `code()` lets
/// callers (and the Python layer) branch on the failure kind.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace wshape
