#pragma once

#include <stdexcept>
#include <string>

namespace stftlda {

/// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the offending line (1-based, 0 if unknown)
/// and field name when available.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::string field = {})
      : Error(format(what, line, field)), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& what, std::size_t line, const std::string& field) {
    std::string out = what;
    if (line > 0) out += " (line " + std::to_string(line) + ")";
    if (!field.empty()) out += " [field '" + field + "']";
    return out;
  }

  std::size_t line_;
  std::string field_;
};

/// Input violates a documented invariant or precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Shapes of two operands do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A referenced record, topic or attribute does not exist.
class NotFoundError : public Error {
 public:
  using Error::Error;
};

}  // namespace stftlda
