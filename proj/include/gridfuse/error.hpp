#pragma once

#include <stdexcept>
#include <string>

namespace gridfuse {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A quantity was expressed in a frame other than the one the operation needs.
class FrameMismatch : public Error {
 public:
  using Error::Error;
};

/// A sample arrived later than the fusion queue's lateness bound allows.
class OutOfOrderSample : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value, unknown override key or missing input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ScenarioError : public Error {
 public:
  using Error::Error;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace gridfuse
