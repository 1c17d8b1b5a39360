#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace confgeom {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A field was evaluated outside its domain or returned a non-finite value.
class EvaluationDomainError : public Error {
 public:
  using Error::Error;
};

/// A metric (or any matrix handed to invert) is too close to singular.
class SingularMetricError : public Error {
 public:
  using Error::Error;
};

class NoConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Rank-deficient Jacobian, out-of-range coordinates or a degenerate chart point.
class ChartError : public Error {
 public:
  using Error::Error;
};

/// The potential's Hessian is not positive definite.
class ModelMisspecificationError : public Error {
 public:
  using Error::Error;
};

class UnsupportedShapeError : public Error {
 public:
  using Error::Error;
};

/// A gauge vanished, diverged or changed sign on the probed set.
class GaugeSingularityError : public Error {
 public:
  using Error::Error;
};

/// A registered gauge does not satisfy its defining equation within tolerance.
class GaugeMismatchError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// The maximum likelihood estimate does not exist for the current data.
class MleUndefinedError : public Error {
 public:
  using Error::Error;
};

/// A stopping rule did not fire before the hard cap.
class RunawayStopError : public Error {
 public:
  using Error::Error;
};

/// Too many replications of a simulation cell were excluded.
class ExclusionLimitError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& what, std::size_t line)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what), line_(line) {}

  /// 1-based line number, 0 when the error is not tied to a line.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A results file does not follow the expected column layout.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace confgeom
