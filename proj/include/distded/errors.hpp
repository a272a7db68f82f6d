#pragma once

#include <stdexcept>
#include <string>

namespace distded {

// Every library failure derives from Error so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct UsageError : Error {
  using Error::Error;
};
struct SamplingError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct KindError : Error {
  using Error::Error;
};
struct EvaluationError : Error {
  using Error::Error;
};
struct IntegrityError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace distded
