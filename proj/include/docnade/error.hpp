#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace docnade {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Invalid combination of settings, shapes or identifiers.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Overflow / NaN during forward or training. position is the 0-based word
// position inside the document, or npos when not position-specific.
class NumericalError : public Error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  NumericalError(const std::string& what, std::size_t position = npos)
      : Error(what), position_(position) {}

  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

}  // namespace docnade
