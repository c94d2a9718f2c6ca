#pragma once

#include <stdexcept>
#include <string>

namespace layerstitch {

// Base class for every failure raised by the library. Each subclass maps onto
// one CLI exit code (see app.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied configuration: shapes, sizes, unknown enum values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A document could not be parsed; the message names the offending field.
class ParseError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// A document parsed but contradicts itself (e.g. manifest vs. payload).
class IntegrityError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Enumeration refused because the space is larger than the configured cap.
class CapExceeded : public Error {
 public:
  CapExceeded(const std::string& cardinality, const std::string& cap)
      : Error("search space cardinality " + cardinality + " exceeds cap " + cap),
        cardinality_(cardinality) {}
  const std::string& cardinality() const { return cardinality_; }

 private:
  std::string cardinality_;
};

}  // namespace layerstitch
