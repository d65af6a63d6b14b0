#pragma once

#include <stdexcept>
#include <string>

namespace proteus {

// Base of every error the library throws. `kind()` is a stable short tag used
// by the CLI and the service when reporting failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
  // Validation errors are caller mistakes (bad input, bad config); everything
  // else is a runtime failure.
  virtual bool is_validation() const noexcept { return false; }
};

#define PROTEUS_DEFINE_ERROR(Name, tag, validation)                     \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(what) {}             \
    const char* kind() const noexcept override { return tag; }          \
    bool is_validation() const noexcept override { return validation; } \
  };

PROTEUS_DEFINE_ERROR(ParseError, "parse", true)
PROTEUS_DEFINE_ERROR(SchemaError, "schema", true)
PROTEUS_DEFINE_ERROR(ValidationError, "validation", true)
PROTEUS_DEFINE_ERROR(ConfigError, "config", true)
PROTEUS_DEFINE_ERROR(FormatError, "format", true)
PROTEUS_DEFINE_ERROR(LengthError, "length", true)
PROTEUS_DEFINE_ERROR(ShapeError, "shape", false)
PROTEUS_DEFINE_ERROR(DomainError, "domain", false)
PROTEUS_DEFINE_ERROR(NumericError, "numeric", false)
PROTEUS_DEFINE_ERROR(LookupError, "lookup", false)
PROTEUS_DEFINE_ERROR(IoError, "io", false)

#undef PROTEUS_DEFINE_ERROR

}  // namespace proteus
