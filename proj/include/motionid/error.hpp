#pragma once

#include <stdexcept>
#include <string>

namespace motionid {

// Base of every error raised by the library. The CLI maps UsageError to
// exit code 1 and every other Error to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

#define MOTIONID_DEFINE_ERROR(Name)    \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  };

// core
MOTIONID_DEFINE_ERROR(EmptySpan)
MOTIONID_DEFINE_ERROR(ZeroQuaternion)
MOTIONID_DEFINE_ERROR(InvalidSample)
// ingest
MOTIONID_DEFINE_ERROR(SchemaError)
MOTIONID_DEFINE_ERROR(OrderError)
MOTIONID_DEFINE_ERROR(IoError)
// preprocess
MOTIONID_DEFINE_ERROR(NoEvents)
MOTIONID_DEFINE_ERROR(TooFewAttempts)
// features
MOTIONID_DEFINE_ERROR(GridMismatch)
MOTIONID_DEFINE_ERROR(TooShort)
MOTIONID_DEFINE_ERROR(CropTooLong)
// nn
MOTIONID_DEFINE_ERROR(ShapeMismatch)
MOTIONID_DEFINE_ERROR(BadTarget)
MOTIONID_DEFINE_ERROR(DegenerateBatch)
// pipeline
MOTIONID_DEFINE_ERROR(InsufficientData)
MOTIONID_DEFINE_ERROR(UserNotHeldOut)
MOTIONID_DEFINE_ERROR(EmptyValidation)
MOTIONID_DEFINE_ERROR(InsufficientAttempts)
// eval
MOTIONID_DEFINE_ERROR(EmptySide)

#undef MOTIONID_DEFINE_ERROR

// Malformed CSV row; carries the 1-based line number of the offending row.
class RowError : public Error {
 public:
  RowError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace motionid
