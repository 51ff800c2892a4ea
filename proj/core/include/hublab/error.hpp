#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hublab {

enum class ErrorCode {
  InvalidArgument,
  ZeroVector,
  DimensionMismatch,
  ShapeMismatch,
  LengthMismatch,
  NonSquareBatch,
  NonSquarePlan,
  BatchTooLarge,
  EmptyBank,
  NonPositiveKappa,
  InconsistentTargets,
  MissingPart,
  NotConverged,
  KTooLarge,
  MissingLabels,
  AllZero,
  ZeroMean,
  ZeroTotal,
  InvalidClusterCount,
  InvalidFraction,
  DivergenceDetected,
  NoRelevant,
  FormatError,
  ConfigError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries a machine-checkable code; the
// CLI maps the code name onto its error output.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ZeroVectorError : public Error {
 public:
  explicit ZeroVectorError(std::size_t row)
      : Error(ErrorCode::ZeroVector, "row " + std::to_string(row) + " has (near) zero norm"), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class NotConvergedError : public Error {
 public:
  explicit NotConvergedError(double residual)
      : Error(ErrorCode::NotConverged, "marginal residual " + std::to_string(residual)),
        residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace hublab
