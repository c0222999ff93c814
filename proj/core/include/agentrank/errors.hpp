#pragma once

#include <stdexcept>
#include <string>

namespace agentrank {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input files (JSONL, config). Carries a human-readable location.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Referential-integrity or lookup failures in datasets and models.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (programming error, not input).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint/file format problems, including version mismatches.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace agentrank
