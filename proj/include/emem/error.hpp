#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace emem {

enum class ErrorCode {
  kInvalidArgument,
  kFormat,
  kTruncated,
  kValidation,
  kDegenerate,
  kIo,
  kChecksum,
  kNotFound,
  kNumeric,
};

const char* error_code_name(ErrorCode code);

// Every failure surfaced by the engine. `position` and `field` locate the
// offending token when the error comes from stream data.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint64_t> position = std::nullopt,
        std::string field = {})
      : std::runtime_error(message),
        code_(code),
        position_(position),
        field_(std::move(field)) {}

  ErrorCode code() const { return code_; }
  const std::optional<std::uint64_t>& position() const { return position_; }
  const std::string& field() const { return field_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> position_;
  std::string field_;
};

}  // namespace emem
