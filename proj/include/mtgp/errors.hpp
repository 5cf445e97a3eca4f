#pragma once

#include <stdexcept>
#include <string>

namespace mtgp {

/// Process exit codes shared by the command-line front end.
enum class ExitCode : int {
  kSuccess = 0,
  kConfiguration = 2,
  kDataValidation = 3,
  kNumerical = 4,
  kIo = 5,
};

/// Root of the library's exception hierarchy. Every error knows which exit
/// code the CLI should report for it.
class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode exit_code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what)
      : Error("shape error: " + what, ExitCode::kDataValidation) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what)
      : Error("parameter error: " + what, ExitCode::kDataValidation) {}
};

class RangeError : public Error {
 public:
  explicit RangeError(const std::string& what)
      : Error("range error: " + what, ExitCode::kDataValidation) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what)
      : Error("data error: " + what, ExitCode::kDataValidation) {}
};

/// CSV / sidecar parse failure. `line` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("parse error" +
                  (line > 0 ? " at line " + std::to_string(line) : std::string()) +
                  ": " + what,
              ExitCode::kDataValidation),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error("configuration error: " + what, ExitCode::kConfiguration) {}
};

/// Cholesky breakdown. `pivot` is the index of the first non-positive pivot.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, long pivot)
      : Error("numerical error: " + what, ExitCode::kNumerical), pivot_(pivot) {}
  long pivot() const noexcept { return pivot_; }

 private:
  long pivot_;
};

class FitError : public Error {
 public:
  explicit FitError(const std::string& what)
      : Error("fit error: " + what, ExitCode::kNumerical) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error("i/o error: " + what, ExitCode::kIo) {}
};

}  // namespace mtgp
