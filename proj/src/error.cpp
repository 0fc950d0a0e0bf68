#include "inml/error.hpp"

namespace inml {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ok: return "OK";
    case ErrorCode::schema: return "SchemaError";
    case ErrorCode::domain: return "DomainError";
    case ErrorCode::feature: return "FeatureError";
    case ErrorCode::io: return "IoError";
    case ErrorCode::argument: return "ArgumentError";
    case ErrorCode::empty_dataset: return "EmptyDataset";
    case ErrorCode::insufficient_class_rows: return "InsufficientClassRows";
    case ErrorCode::k_too_large: return "KTooLarge";
    case ErrorCode::label: return "LabelError";
    case ErrorCode::code_width: return "CodeWidthError";
    case ErrorCode::binning_required: return "BinningRequired";
    case ErrorCode::overflow: return "OverflowError";
    case ErrorCode::bin_count: return "BinCountError";
    case ErrorCode::shape_mismatch: return "ShapeMismatch";
    case ErrorCode::range: return "RangeError";
    case ErrorCode::placement: return "PlacementError";
    case ErrorCode::program: return "ProgramError";
    case ErrorCode::domain_too_large: return "DomainTooLarge";
    case ErrorCode::format: return "FormatError";
    case ErrorCode::timestamp_regression: return "TimestampRegression";
    case ErrorCode::unknown_feature: return "UnknownFeature";
    case ErrorCode::internal: return "InternalError";
  }
  return "UnknownError";
}

const char* placement_failure_name(PlacementFailure reason) noexcept {
  switch (reason) {
    case PlacementFailure::stage_overflow: return "stage_overflow";
    case PlacementFailure::key_too_wide: return "key_too_wide";
    case PlacementFailure::action_too_wide: return "action_too_wide";
    case PlacementFailure::metadata_overflow: return "metadata_overflow";
    case PlacementFailure::memory_overflow: return "memory_overflow";
  }
  return "unknown";
}

}  // namespace inml
