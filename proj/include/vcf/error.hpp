#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vcf {

/// Failure categories raised by the pipeline. The string form of each code is
/// used verbatim as the reason code in exclusion logs.
enum class ErrorCode {
  kFormat,
  kUnsupportedType,
  kResource,
  kValidation,
  kIo,
  kEmptyMask,
  kEmptyInput,
  kTooSmall,
  kResolution,
  kDegenerateGeometry,
  kAmbiguousPose,
  kProjectionFailure,
  kFeatureFailure,
  kDivisionGuard,
  kScanExcluded,
  kMissingFeature,
  kDegenerateLabels,
  kConvergence,
  kEmptyEvaluation,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// CLI exit status: 2 for validation problems, 3 for data problems.
int exit_code_for(ErrorCode code);

}  // namespace vcf
