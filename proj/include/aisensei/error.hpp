#pragma once

#include <stdexcept>
#include <string>

namespace aisensei {

// Base of every error thrown by the library. code() is a stable
// snake_case identifier used by the CLI and the HTTP layer.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* code() const noexcept { return "error"; }
};

#define AISENSEI_DEFINE_ERROR(Name, Base, Code)                  \
  class Name : public Base {                                    \
   public:                                                      \
    using Base::Base;                                           \
    const char* code() const noexcept override { return Code; } \
  }

// Configuration / input problems (CLI exit code 2).
AISENSEI_DEFINE_ERROR(ConfigError, Error, "config_error");
AISENSEI_DEFINE_ERROR(ParseError, ConfigError, "parse_error");
AISENSEI_DEFINE_ERROR(CycleError, ConfigError, "cycle_error");
AISENSEI_DEFINE_ERROR(DanglingEdgeError, ConfigError, "dangling_edge");
AISENSEI_DEFINE_ERROR(UnknownConceptError, ConfigError, "unknown_concept");
AISENSEI_DEFINE_ERROR(ThresholdError, ConfigError, "threshold_error");
AISENSEI_DEFINE_ERROR(InvalidOverrideError, ConfigError, "invalid_override");
AISENSEI_DEFINE_ERROR(EmptyFieldError, ConfigError, "empty_field");
AISENSEI_DEFINE_ERROR(AlreadyTieredError, ConfigError, "already_tiered");
AISENSEI_DEFINE_ERROR(MissingImpasseError, ConfigError, "missing_impasse");
AISENSEI_DEFINE_ERROR(DuplicateLabelError, ConfigError, "duplicate_label");
AISENSEI_DEFINE_ERROR(LengthMismatchError, ConfigError, "length_mismatch");

// LLM provider problems (CLI exit code 3).
AISENSEI_DEFINE_ERROR(ProviderError, Error, "provider_error");
AISENSEI_DEFINE_ERROR(CassetteMissError, ProviderError, "cassette_miss");
AISENSEI_DEFINE_ERROR(AuthError, ProviderError, "auth_error");

AISENSEI_DEFINE_ERROR(IoError, Error, "io_error");

// Tutoring service state errors.
AISENSEI_DEFINE_ERROR(NotFoundError, Error, "not_found");
AISENSEI_DEFINE_ERROR(SessionNotFoundError, NotFoundError, "session_not_found");
AISENSEI_DEFINE_ERROR(EmptyBankError, Error, "empty_bank");
AISENSEI_DEFINE_ERROR(ConflictError, Error, "conflict");
AISENSEI_DEFINE_ERROR(SessionCompletedError, ConflictError, "session_completed");
AISENSEI_DEFINE_ERROR(AlreadyRatedError, ConflictError, "already_rated");
AISENSEI_DEFINE_ERROR(DuplicateSurveyError, ConflictError, "duplicate_survey");
AISENSEI_DEFINE_ERROR(ValidationError, Error, "validation_error");
AISENSEI_DEFINE_ERROR(MissingInputError, ValidationError, "missing_input");
AISENSEI_DEFINE_ERROR(RangeError, ValidationError, "range_error");
AISENSEI_DEFINE_ERROR(UnknownItemError, ValidationError, "unknown_item");

#undef AISENSEI_DEFINE_ERROR

}  // namespace aisensei
