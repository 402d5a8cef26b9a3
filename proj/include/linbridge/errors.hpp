#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace linbridge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model file is malformed: missing field, wrong type or shape mismatch.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Table coefficient knots are not strictly increasing (or too few).
class KnotError : public SchemaError {
 public:
  using SchemaError::SchemaError;
};

/// Adaptive ODE step control could not meet the requested tolerance.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature could not meet the requested tolerance.
class QuadError : public Error {
 public:
  using Error::Error;
};

/// A matrix required to be symmetric positive definite failed Cholesky.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

/// Gamma(s,T) (or another non-symmetric kernel) could not be inverted.
class SingularGamma : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of a closed-form formula.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Finite-difference stencil for a tabulated coefficient left the knot range.
class DifferentiationError : public Error {
 public:
  using Error::Error;
};

/// Moment summary and reference laws are defined on different time grids.
class GridMismatch : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (CLI flags, suite names, grids).
class ConfigError : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(std::string_view)>;

/// Installs the sink for non-fatal numerical warnings (ill-conditioning and
/// the like). The default handler writes to stderr. Returns the previous one.
WarningHandler set_warning_handler(WarningHandler handler);

void warn(std::string_view message);

}  // namespace linbridge
