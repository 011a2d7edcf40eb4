#pragma once

#include <stdexcept>
#include <string>

namespace capsnet {

enum class ErrorKind {
  dimension,      // incompatible tensor shapes
  configuration,  // invalid spec / config values
  domain,         // numeric domain violation (log of <= 0, division by zero, overflow)
  contract,       // caller broke a precondition
  format,         // malformed file contents
  length,         // truncated file
  consistency,    // cross-file or cross-field mismatch
  io,             // filesystem failure
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void raise(ErrorKind kind, const std::string& message);

}  // namespace capsnet
