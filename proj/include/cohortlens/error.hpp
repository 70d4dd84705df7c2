#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cohortlens {

// Error categories double as CLI exit codes.
enum class ErrorCategory {
  Usage = 2,
  Parse = 3,
  Schema = 4,
  Validation = 5,
  Contract = 6,
  Config = 7,
  Io = 8,
  Data = 9,
};

const char* category_name(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

/// Malformed input text. `line`/`column` are 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0, std::size_t column = 0)
      : Error(ErrorCategory::Parse, what), line_(line), column_(column) {}
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t line_, column_;
};

/// A CSV data row could not be converted. `row` counts data rows from 1.
class RowError : public ParseError {
 public:
  RowError(const std::string& what, std::size_t row)
      : ParseError(what, row + 1, 0), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class SchemaError : public Error {
 public:
  SchemaError(const std::string& field, const std::string& what)
      : Error(ErrorCategory::Schema, what), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class ValidationError : public Error {
 public:
  ValidationError(const std::string& subject, const std::string& what)
      : Error(ErrorCategory::Validation, what), subject_(subject) {}
  const std::string& subject() const noexcept { return subject_; }

 private:
  std::string subject_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ErrorCategory::Usage, what) {}
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what) : Error(ErrorCategory::Contract, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::Io, what) {}
};

/// Data cannot support the requested computation (degenerate target, too few samples, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

}  // namespace cohortlens
