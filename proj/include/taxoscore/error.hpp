#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace taxoscore {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  /// Short machine-readable category, used by the CLI error JSON.
  virtual const char* kind() const noexcept { return "error"; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
};

class DomainError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "domain"; }
};

class SchemaError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "schema"; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

class VocabularyError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "vocabulary"; }
};

class AlignmentError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "alignment"; }
};

class MomentConditionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "moment_condition"; }
};

class UndefinedTestError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "undefined_test"; }
};

/// Optimizer failure; carries the per-iteration objective trace.
class FitError : public Error {
 public:
  FitError(const std::string& what, std::vector<double> trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const char* kind() const noexcept override { return "fit"; }
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  std::vector<double> trace_;
};

}  // namespace taxoscore
