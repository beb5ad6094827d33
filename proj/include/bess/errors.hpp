#pragma once

#include <stdexcept>
#include <string>

namespace bess {

// Bad or inconsistent configuration (maps to CLI exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inputs outside an operation's domain, e.g. a zero SoC in the charge branch.
class DegenerateInput : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite plant or ensemble state (maps to CLI exit code 2).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system failures, always carrying the offending path (exit code 3).
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace bess
