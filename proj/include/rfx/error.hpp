#pragma once

#include <stdexcept>
#include <string>

namespace rfx {

/// Malformed input data or a dataset/forest mismatch.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A representation would exceed the configured memory budget.
class BudgetError : public std::runtime_error {
 public:
  BudgetError(std::string message, std::string planner_report)
      : std::runtime_error(std::move(message)), report_(std::move(planner_report)) {}

  const std::string& planner_report() const noexcept { return report_; }

 private:
  std::string report_;
};

/// Invalid configuration or argument combination.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A stored file is truncated, corrupt, or of an unknown version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rfx
