#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pointroute {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad argument values (sizes, rates, seeds, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected in a forward or backward quantity.
class NumericError : public Error {
 public:
  using Error::Error;
};

class DegenerateInstanceError : public Error {
 public:
  using Error::Error;
};

class TourError : public Error {
 public:
  enum class Kind { kDuplicate, kMissing, kOutOfRange };

  TourError(Kind kind, std::size_t index, const std::string& what)
      : Error(what), kind_(kind), index_(index) {}

  Kind kind() const noexcept { return kind_; }
  std::size_t index() const noexcept { return index_; }

 private:
  Kind kind_;
  std::size_t index_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  enum class Kind { kVersion, kShape, kTruncated, kConfig, kIo };

  CheckpointError(Kind kind, const std::string& what)
      : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace pointroute
