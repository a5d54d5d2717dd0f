#pragma once

#include <stdexcept>
#include <string>

namespace popdmp {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model data violates one of its declared invariants.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// ODE integration produced a non-finite state.
class IntegrationDiverged : public Error {
 public:
  using Error::Error;
};

/// Observation has zero likelihood under the current belief.
class ImpossibleObservation : public Error {
 public:
  explicit ImpossibleObservation(const std::string& what, long event_index = -1)
      : Error(what), event_index_(event_index) {}

  long event_index() const noexcept { return event_index_; }

 private:
  long event_index_;
};

/// Configuration could not be parsed or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace popdmp
