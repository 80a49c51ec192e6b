// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace gsifn {

/// Base error. `code()` is a short machine-parseable tag ("shape", "mft.bad_magic", ...)
/// that the CLI prints ahead of the message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape", what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config", what) {}
};

}  // namespace gsifn
