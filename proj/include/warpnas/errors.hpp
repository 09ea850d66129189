#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace warpnas {

/// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  kShape = 3,
  kArgument = 4,
  kConfig = 5,
  kParse = 6,
  kValidation = 7,
  kMissingDependency = 8,
  kIo = 9,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

std::string_view error_kind_name(ErrorKind kind);

#define WARPNAS_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

WARPNAS_DEFINE_ERROR(ShapeError, kShape)
WARPNAS_DEFINE_ERROR(ArgumentError, kArgument)
WARPNAS_DEFINE_ERROR(ConfigError, kConfig)
WARPNAS_DEFINE_ERROR(ValidationError, kValidation)
WARPNAS_DEFINE_ERROR(MissingDependencyError, kMissingDependency)
WARPNAS_DEFINE_ERROR(IoError, kIo)

#undef WARPNAS_DEFINE_ERROR

/// Parse failure with the byte offset into the offending text.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(ErrorKind::kParse, what + " (at position " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

}  // namespace warpnas
