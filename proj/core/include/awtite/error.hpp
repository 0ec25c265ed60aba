#pragma once

#include <stdexcept>
#include <string>

namespace awtite {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Internal consistency check failed (e.g. an event recorded with no follow-up).
class InvariantViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Design rule invoked on a state it is not defined for.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration document. `where` is a JSON pointer or a
// "line:column" position when the document failed to parse.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string where, std::string message)
      : std::runtime_error(where.empty() ? message : where + ": " + message),
        where_(std::move(where)),
        message_(std::move(message)) {}

  const std::string& where() const noexcept { return where_; }
  const std::string& message() const noexcept { return message_; }

 private:
  std::string where_;
  std::string message_;
};

}  // namespace awtite
