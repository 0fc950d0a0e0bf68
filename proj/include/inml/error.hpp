#pragma once

#include <stdexcept>
#include <string>

namespace inml {

// Stable numeric codes; the C API and the CLI exit status use the same values.
enum class ErrorCode : int {
  ok = 0,
  schema = 10,
  domain = 11,
  feature = 12,
  io = 13,
  argument = 14,
  empty_dataset = 20,
  insufficient_class_rows = 21,
  k_too_large = 22,
  label = 23,
  code_width = 30,
  binning_required = 31,
  overflow = 32,
  bin_count = 33,
  shape_mismatch = 34,
  range = 35,
  placement = 40,
  program = 50,
  domain_too_large = 51,
  format = 60,
  timestamp_regression = 61,
  unknown_feature = 62,
  internal = 99,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Thin named subclasses so callers can catch a single category.
#define INML_DEFINE_ERROR(Name, Code)                              \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& what) : Error(Code, what) {}  \
  };

INML_DEFINE_ERROR(SchemaError, ErrorCode::schema)
INML_DEFINE_ERROR(DomainError, ErrorCode::domain)
INML_DEFINE_ERROR(FeatureError, ErrorCode::feature)
INML_DEFINE_ERROR(IoError, ErrorCode::io)
INML_DEFINE_ERROR(ArgumentError, ErrorCode::argument)
INML_DEFINE_ERROR(EmptyDatasetError, ErrorCode::empty_dataset)
INML_DEFINE_ERROR(InsufficientClassRowsError, ErrorCode::insufficient_class_rows)
INML_DEFINE_ERROR(KTooLargeError, ErrorCode::k_too_large)
INML_DEFINE_ERROR(LabelError, ErrorCode::label)
INML_DEFINE_ERROR(CodeWidthError, ErrorCode::code_width)
INML_DEFINE_ERROR(BinningRequiredError, ErrorCode::binning_required)
INML_DEFINE_ERROR(OverflowError, ErrorCode::overflow)
INML_DEFINE_ERROR(BinCountError, ErrorCode::bin_count)
INML_DEFINE_ERROR(ShapeMismatchError, ErrorCode::shape_mismatch)
INML_DEFINE_ERROR(RangeError, ErrorCode::range)
INML_DEFINE_ERROR(ProgramError, ErrorCode::program)
INML_DEFINE_ERROR(DomainTooLargeError, ErrorCode::domain_too_large)
INML_DEFINE_ERROR(FormatError, ErrorCode::format)
INML_DEFINE_ERROR(TimestampRegressionError, ErrorCode::timestamp_regression)
INML_DEFINE_ERROR(UnknownFeatureError, ErrorCode::unknown_feature)

#undef INML_DEFINE_ERROR

enum class PlacementFailure {
  stage_overflow,
  key_too_wide,
  action_too_wide,
  metadata_overflow,
  memory_overflow,
};

const char* placement_failure_name(PlacementFailure reason) noexcept;

class PlacementError : public Error {
 public:
  PlacementError(PlacementFailure reason, const std::string& what)
      : Error(ErrorCode::placement, what), reason_(reason) {}
  PlacementFailure reason() const noexcept { return reason_; }

 private:
  PlacementFailure reason_;
};

}  // namespace inml
