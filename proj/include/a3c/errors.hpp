#pragma once

#include <stdexcept>
#include <string>

namespace a3c {

// Error classes map one-to-one onto CLI exit codes (see tools/a3c_cli.cpp).

/// Invalid configuration, malformed input file or bad argument.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A modelling assumption (delay bound, negative definiteness, ergodicity)
/// does not hold for the given input.
class AssumptionViolation : public std::runtime_error {
 public:
  AssumptionViolation(std::string assumption, const std::string& detail)
      : std::runtime_error(assumption + ": " + detail), assumption_(std::move(assumption)) {}

  const std::string& assumption() const { return assumption_; }

 private:
  std::string assumption_;
};

/// Filesystem failure; the message carries the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace a3c
