#pragma once

#include <stdexcept>
#include <string>

namespace heparl {

// Exit-code mapping used by the CLI: validation 2, data 3, internal 4.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InternalError : std::runtime_error {
  explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised when vital signs cannot be scored; message names the offending field.
struct ScoringError : ValidationError {
  explicit ScoringError(const std::string& msg) : ValidationError(msg) {}
};

}  // namespace heparl
