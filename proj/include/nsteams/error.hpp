#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nst {

enum class ErrorCode {
  SyntaxError,
  ZeroDenominator,
  DuplicateRow,
  UnknownSymbol,
  UnknownSection,
  NormalizationError,
  MissingEntry,
  GroundMismatch,
  NotAFactor,
  UnknownDm,
  NotCausal,
  NotSequential,
  NotSolvable,
  NotPartiallyNested,
  BadPrefix,
  MissingOrdering,
  PolicyDependenceDetected,
  NotApplicable,
  NotInvertible,
  NotCi,
  BudgetExceeded,
  ModelMismatch,
  EmptySample,
  DeadlockEncountered,
  InvalidArgument,
  IoError,
};

inline std::string_view error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::DuplicateRow: return "DuplicateRow";
    case ErrorCode::UnknownSymbol: return "UnknownSymbol";
    case ErrorCode::UnknownSection: return "UnknownSection";
    case ErrorCode::NormalizationError: return "NormalizationError";
    case ErrorCode::MissingEntry: return "MissingEntry";
    case ErrorCode::GroundMismatch: return "GroundMismatch";
    case ErrorCode::NotAFactor: return "NotAFactor";
    case ErrorCode::UnknownDm: return "UnknownDm";
    case ErrorCode::NotCausal: return "NotCausal";
    case ErrorCode::NotSequential: return "NotSequential";
    case ErrorCode::NotSolvable: return "NotSolvable";
    case ErrorCode::NotPartiallyNested: return "NotPartiallyNested";
    case ErrorCode::BadPrefix: return "BadPrefix";
    case ErrorCode::MissingOrdering: return "MissingOrdering";
    case ErrorCode::PolicyDependenceDetected: return "PolicyDependenceDetected";
    case ErrorCode::NotApplicable: return "NotApplicable";
    case ErrorCode::NotInvertible: return "NotInvertible";
    case ErrorCode::NotCi: return "NotCi";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::ModelMismatch: return "ModelMismatch";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::DeadlockEncountered: return "DeadlockEncountered";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

// A diagnostic optionally carries a 1-based source position; zero means unknown.
struct Diagnostic {
  ErrorCode code = ErrorCode::InvalidArgument;
  std::string message;
  std::size_t line = 0;
  std::size_t column = 0;

  std::string to_string() const {
    std::string out;
    if (line != 0) {
      out += std::to_string(line) + ":" + std::to_string(column) + ": ";
    }
    out += std::string(error_code_name(code)) + ": " + message;
    return out;
  }
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0, std::size_t column = 0)
      : std::runtime_error(Diagnostic{code, message, line, column}.to_string()),
        diag_{code, message, line, column} {}

  explicit Error(Diagnostic d) : std::runtime_error(d.to_string()), diag_(std::move(d)) {}

  ErrorCode code() const noexcept { return diag_.code; }
  std::size_t line() const noexcept { return diag_.line; }
  std::size_t column() const noexcept { return diag_.column; }
  const Diagnostic& diagnostic() const noexcept { return diag_; }

 private:
  Diagnostic diag_;
};

// Raised by model validation; carries one diagnostic per violated invariant.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Diagnostic> diags)
      : Error(diags.empty() ? Diagnostic{ErrorCode::InvalidArgument, "validation failed"} : diags.front()),
        diags_(std::move(diags)) {}

  const std::vector<Diagnostic>& diagnostics() const noexcept { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

}  // namespace nst
