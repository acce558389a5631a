#pragma once

#include <stdexcept>
#include <string>

namespace snippetprop {

// Malformed or inconsistent input data (files, schemas, dimension mismatches
// in user-supplied payloads). CLI maps this to exit code 2.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure (singular system, non-finite values). CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration (unknown keys, out-of-range values). CLI exit code 1.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace snippetprop
