// SPDX-License-Identifier: Apache-2.0
//
// Error categories shared by every kcciol module. The CLI maps UsageError to
// exit code 2 and everything else to exit code 1.

#pragma once

#include <stdexcept>
#include <string>

namespace kcciol {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* category() const noexcept { return "error"; }
};

/// Caller violated a precondition (shape mismatch, bad argument, ...).
class UsageError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "usage error"; }
};

/// A NaN or Inf showed up where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "numeric error"; }
};

/// Malformed or corrupted checkpoint / data file.
class FormatError : public Error {
 public:
  using Error::Error;
  const char* category() const noexcept override { return "format error"; }
};

/// Invalid experiment configuration. Carries the offending line when known.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& message, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        line_(line) {}
  const char* category() const noexcept override { return "configuration error"; }
  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace kcciol
