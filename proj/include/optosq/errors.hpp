#pragma once

#include <stdexcept>
#include <string>

namespace optosq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidDimensionError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

/// A parameter combination hits a division by zero in a closed-form formula.
class SingularParameterError : public Error {
 public:
  using Error::Error;
};

/// An ODE trajectory left the bounded region.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, double time)
      : Error(what + " (t=" + std::to_string(time) + ")"), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class NotSteadyError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

/// A density matrix or covariance matrix stopped being a physical state.
class PhysicalityError : public Error {
 public:
  using Error::Error;
};

/// Drift matrix is not Hurwitz, so no stationary state exists.
class StabilityError : public Error {
 public:
  using Error::Error;
};

class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration. `path()` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace optosq
