#include "vcf/error.hpp"

namespace vcf {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kUnsupportedType: return "unsupported_type";
    case ErrorCode::kResource: return "resource";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kEmptyMask: return "empty_mask";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kTooSmall: return "too_small";
    case ErrorCode::kResolution: return "resolution";
    case ErrorCode::kDegenerateGeometry: return "degenerate_geometry";
    case ErrorCode::kAmbiguousPose: return "ambiguous_pose";
    case ErrorCode::kProjectionFailure: return "projection_failure";
    case ErrorCode::kFeatureFailure: return "feature_failure";
    case ErrorCode::kDivisionGuard: return "division_guard";
    case ErrorCode::kScanExcluded: return "scan_excluded";
    case ErrorCode::kMissingFeature: return "missing_feature";
    case ErrorCode::kDegenerateLabels: return "degenerate_labels";
    case ErrorCode::kConvergence: return "convergence";
    case ErrorCode::kEmptyEvaluation: return "empty_evaluation";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation:
    case ErrorCode::kMissingFeature:
    case ErrorCode::kResolution:
      return 2;
    default:
      return 3;
  }
}

}  // namespace vcf
