#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lexmine {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input record; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Failure reported by a chat or embedding backend. `status` is the HTTP
/// status when one exists, 0 for transport failures.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int status, bool transient)
      : Error(what), status_(status), transient_(transient) {}

  int status() const noexcept { return status_; }
  bool transient() const noexcept { return transient_; }

 private:
  int status_;
  bool transient_;
};

/// The backend rejected the prompt as too long. Callers shed shots and retry.
class ContextLengthError : public BackendError {
 public:
  explicit ContextLengthError(const std::string& what) : BackendError(what, 400, false) {}
};

}  // namespace lexmine
