#pragma once

#include <stdexcept>
#include <string>

namespace fbrl {

// Error taxonomy shared across the library. The CLI maps these onto exit
// codes: usage/config -> 1, training/numeric -> 2, missing artifact -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct UsageError : Error {
  using Error::Error;
};

struct TrainingError : Error {
  using Error::Error;
};

struct EnvError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct DegenerateTaskError : NumericError {
  using NumericError::NumericError;
};

struct MissingArtifactError : Error {
  using Error::Error;
};

}  // namespace fbrl
