#ifndef BNC_ERRORS_HPP
#define BNC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bnc {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed inputs: bad dimensions, non-stochastic rows, unknown ids,
/// unparsable files. Maps to CLI exit code 1.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// Numeric breakdown: NaN anywhere, non-PD covariance after flooring,
/// singular combined precision, quadrature bounds not covering mass.
/// Maps to CLI exit code 2.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

/// Observation outside the invertibility region of an autoregressive
/// log-sum model (reverberation-tail floor).
class InvalidObservationError : public Error {
 public:
  explicit InvalidObservationError(const std::string& msg) : Error(msg) {}
};

}  // namespace bnc

#endif  // BNC_ERRORS_HPP
