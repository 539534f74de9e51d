// Error vocabulary shared by every module.
#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace evaudit {

enum class ErrorCode {
  // cohort / benchmark validation
  NegativeCount,
  CasesExceedPopulation,
  StrataSumMismatch,
  ConflictingDeclaration,
  DuplicateGroupName,
  UnknownGroup,
  EmptyCohort,
  StrataLabelMismatch,
  // rates
  ZeroPopulation,
  InvalidScale,
  EmptySeries,
  ZeroBaseline,
  // goodness of fit
  LengthMismatch,
  ZeroExpectedCell,
  // propensity / matching
  SingleClass,
  SeparationDetected,
  SingularDesign,
  EmptyPool,
  InvalidK,
  UnknownId,
  // simulation
  InvalidConfig,
  SingularSystem,
  // input documents
  ParseError,
  ValidationFailed,
  // contract violations without a more specific code
  InvalidArgument,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NegativeCount: return "NegativeCount";
    case ErrorCode::CasesExceedPopulation: return "CasesExceedPopulation";
    case ErrorCode::StrataSumMismatch: return "StrataSumMismatch";
    case ErrorCode::ConflictingDeclaration: return "ConflictingDeclaration";
    case ErrorCode::DuplicateGroupName: return "DuplicateGroupName";
    case ErrorCode::UnknownGroup: return "UnknownGroup";
    case ErrorCode::EmptyCohort: return "EmptyCohort";
    case ErrorCode::StrataLabelMismatch: return "StrataLabelMismatch";
    case ErrorCode::ZeroPopulation: return "ZeroPopulation";
    case ErrorCode::InvalidScale: return "InvalidScale";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ZeroExpectedCell: return "ZeroExpectedCell";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::SeparationDetected: return "SeparationDetected";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationFailed: return "ValidationFailed";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

// One violated invariant, with the path of the offending field
// ("cohort.groups[0].population" style).
struct Violation {
  ErrorCode code;
  std::string path;
  std::string message;
};

// Carries every violation found in one validation pass, not just the first.
class ValidationError : public Error {
public:
  explicit ValidationError(std::vector<Violation> violations)
      : Error(ErrorCode::ValidationFailed, summarize(violations)),
        violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const noexcept { return violations_; }

  bool has(ErrorCode code) const noexcept {
    for (const auto& v : violations_)
      if (v.code == code) return true;
    return false;
  }

private:
  static std::string summarize(const std::vector<Violation>& violations) {
    std::string out = std::to_string(violations.size()) + " violation(s)";
    for (const auto& v : violations) {
      out += "\n  [";
      out += error_code_name(v.code);
      out += "] ";
      out += v.path;
      out += ": ";
      out += v.message;
    }
    return out;
  }

  std::vector<Violation> violations_;
};

}  // namespace evaudit
