#pragma once

#include <stdexcept>
#include <string>

namespace sceneflow {

// Base class for all library errors. Subclasses map 1:1 onto the C API
// status codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidArgumentError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Raised when a geometric fit has no unique solution (collinear points,
// too few correspondences, empty inputs to a solver).
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

// Raised when an optimization produces non-finite values.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sceneflow
