#pragma once

#include <stdexcept>
#include <string>

namespace ssps {

// Every failure raised by the library derives from Error. kind() is a stable,
// machine-parseable class name used by the CLI error line.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define SSPS_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                      \
   public:                                                         \
    using Error::Error;                                            \
    const char* kind() const noexcept override { return #Name; }   \
  }

SSPS_DEFINE_ERROR(ZeroNormError);
SSPS_DEFINE_ERROR(DimensionError);
SSPS_DEFINE_ERROR(InvalidArgument);
SSPS_DEFINE_ERROR(ConfigError);
SSPS_DEFINE_ERROR(EmptyInputError);
SSPS_DEFINE_ERROR(NumericalError);
SSPS_DEFINE_ERROR(StaleCacheError);
SSPS_DEFINE_ERROR(IoError);

#undef SSPS_DEFINE_ERROR

}  // namespace ssps
