#pragma once

#include <stdexcept>
#include <string>

namespace aeroflight {

/// Malformed text input. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Input parsed fine but violates a domain invariant.
class ValidationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Vector/matrix sizes disagree with what the model or network expects.
class DimensionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, long index)
      : std::runtime_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  long index() const noexcept { return index_; }

 private:
  long index_;
};

/// The momentum task became uncontrollable (rank collapse of the input matrix).
class ControllerFault : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace aeroflight
