#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vra {

// Base of every error the library throws. The C API maps each subclass onto
// a status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent run configuration (unknown key, missing path, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input data violates a format or consistency rule.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : DataError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite or exploding parameter.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace vra
