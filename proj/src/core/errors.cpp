#include "core/errors.hpp"

namespace capsnet {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::configuration: return "configuration error";
    case ErrorKind::domain: return "domain error";
    case ErrorKind::contract: return "contract error";
    case ErrorKind::format: return "format error";
    case ErrorKind::length: return "length error";
    case ErrorKind::consistency: return "consistency error";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void raise(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace capsnet
