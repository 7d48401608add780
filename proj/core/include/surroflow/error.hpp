#pragma once

#include <stdexcept>
#include <string>

namespace surroflow {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
  /// Short machine-readable category, e.g. "parameter".
  [[nodiscard]] virtual const char* kind() const noexcept = 0;
  /// Input problems map to exit code 1, everything else to 2.
  [[nodiscard]] virtual bool is_validation() const noexcept { return false; }
};

#define SURROFLOW_DEFINE_ERROR(Name, tag, validation)                       \
  class Name : public Error {                                               \
  public:                                                                   \
    using Error::Error;                                                     \
    [[nodiscard]] const char* kind() const noexcept override { return tag; } \
    [[nodiscard]] bool is_validation() const noexcept override {            \
      return validation;                                                    \
    }                                                                       \
  };

SURROFLOW_DEFINE_ERROR(ParameterError, "parameter", true)
SURROFLOW_DEFINE_ERROR(ValidationError, "validation", true)
SURROFLOW_DEFINE_ERROR(ParseError, "parse", true)
SURROFLOW_DEFINE_ERROR(UsageError, "usage", true)
SURROFLOW_DEFINE_ERROR(DataError, "data", true)
SURROFLOW_DEFINE_ERROR(ShapeError, "shape", false)
SURROFLOW_DEFINE_ERROR(IndexError, "index", false)
SURROFLOW_DEFINE_ERROR(NumericError, "numeric", false)
SURROFLOW_DEFINE_ERROR(AssignmentError, "assignment", false)
SURROFLOW_DEFINE_ERROR(TrainingError, "training", false)
SURROFLOW_DEFINE_ERROR(UndefinedMetricError, "undefined-metric", false)
SURROFLOW_DEFINE_ERROR(IoError, "io", false)

#undef SURROFLOW_DEFINE_ERROR

}  // namespace surroflow
