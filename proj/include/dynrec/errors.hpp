#pragma once

#include <stdexcept>
#include <string>

namespace dynrec {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Dimension or parameter outside what a built-in system supports.
class InvalidSystem : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A burst lacks velocities where the consumer needs them.
class IncompleteBurst : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

/// The adaptive integrator could not advance (step underflow or blow-up).
class IntegrationFailure : public Error {
 public:
  IntegrationFailure(const std::string& what, double last_time, long burst = -1)
      : Error(what), last_time_(last_time), burst_(burst) {}

  double last_time() const noexcept { return last_time_; }
  /// Index of the failing burst, or -1 when not raised from burst generation.
  long burst() const noexcept { return burst_; }

 private:
  double last_time_;
  long burst_;
};

/// Malformed or inconsistent experiment configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace dynrec
