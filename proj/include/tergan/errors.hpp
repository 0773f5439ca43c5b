#pragma once

#include <stdexcept>
#include <string>

namespace tergan {

/// Failure categories; each maps to a CLI exit code.
enum class ErrorKind { validation, configuration, divergence, io, integrity };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& m) : Error(ErrorKind::validation, m) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::configuration, m) {}
};

/// Raised when a loss term becomes non-finite. `term` names the offender.
struct DivergenceError : Error {
  DivergenceError(const std::string& term, const std::string& m)
      : Error(ErrorKind::divergence, m), term(term) {}
  std::string term;
};

struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string& m) : Error(ErrorKind::integrity, m) {}
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::configuration: return "config";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::io: return "io";
    case ErrorKind::integrity: return "integrity";
  }
  return "unknown";
}

}  // namespace tergan
