#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace choicefit {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Malformed input cell; carries the 1-based data row and column name.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t row, std::string column)
      : Error(what), row_(row), column_(std::move(column)) {}
  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Any failure to produce an estimate. Selection treats these as
/// "candidate not estimable".
class EstimationError : public Error {
 public:
  using Error::Error;
};

class UnderdeterminedError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class DegenerateOutcomeError : public EstimationError {
 public:
  using EstimationError::EstimationError;
};

class CollinearityError : public EstimationError {
 public:
  CollinearityError(const std::string& what, std::vector<std::string> columns)
      : EstimationError(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::string> columns_;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// Pooled and per-bin log-likelihoods do not come from a true partition.
class NestingError : public Error {
 public:
  using Error::Error;
};

}  // namespace choicefit
