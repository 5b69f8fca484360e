#pragma once

#include <stdexcept>
#include <string>

namespace tbell {

/// Argument outside the mathematical domain of an operation (V > 1, non-PSD POVM, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid configuration or recipe. `field` carries the dotted path of the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Data-dependent failure during analysis (unsorted input, zero counts, degenerate fit).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tbell
