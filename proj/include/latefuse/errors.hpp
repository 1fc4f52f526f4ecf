#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace latefuse {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Scenario / config validation failure. `where` names the line or field.
class ValidationError : public Error {
 public:
  ValidationError(std::string where, const std::string& what)
      : Error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Malformed wire frame; carries the byte offset at which parsing stopped.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error("parse error at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class VersionError : public Error {
 public:
  explicit VersionError(unsigned version)
      : Error("unsupported wire version " + std::to_string(version)), version_(version) {}
  unsigned version() const noexcept { return version_; }

 private:
  unsigned version_;
};

/// Encoded frame does not fit the per-message byte budget.
class SizeError : public Error {
 public:
  SizeError(std::size_t size, std::size_t budget)
      : Error("encoded message is " + std::to_string(size) + " bytes, budget is " +
              std::to_string(budget)),
        size_(size),
        budget_(budget) {}
  std::size_t size() const noexcept { return size_; }
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t size_;
  std::size_t budget_;
};

}  // namespace latefuse
