#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace jbe {

// Base of every error the library throws. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UnknownPattern : public Error {
 public:
  using Error::Error;
};

// Well-formed descriptor naming a triple that is not in the catalog.
class IllegalTriple : public UnknownPattern {
 public:
  using UnknownPattern::UnknownPattern;
};

class AmbiguousPattern : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  SchemaError(std::size_t row, const std::string& what)
      : Error("row " + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class MissingBaseline : public Error {
 public:
  explicit MissingBaseline(const std::string& device)
      : Error("MissingBaseline: no baseline records for device '" + device + "'"),
        device_(device) {}
  const std::string& device() const noexcept { return device_; }

 private:
  std::string device_;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class UnknownLevel : public Error {
 public:
  using Error::Error;
};

class DegenerateChains : public Error {
 public:
  using Error::Error;
};

class CovarianceDimensionMismatch : public Error {
 public:
  using Error::Error;
};

class EmptyManifest : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace jbe
