#pragma once

#include <stdexcept>
#include <string>

namespace bifinf {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A request exceeds a configured hard resource cap.
class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Two independent evaluations of the same quantity disagree.
class InconsistencyError : public Error {
 public:
  using Error::Error;
};

/// An iteration failed to converge, or stopped contracting.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Newton met a (numerically) singular Jacobian, typically near a bifurcation.
class NearBifurcationError : public ConvergenceError {
 public:
  using ConvergenceError::ConvergenceError;
};

/// A time integration produced non-finite or overflowing values.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// A nonlinearity does not satisfy the declared Landesman-Lazer limits.
class NonconformingError : public Error {
 public:
  using Error::Error;
};

/// A query left the region on which a sampled object is defined.
class OutOfDomainError : public Error {
 public:
  using Error::Error;
};

/// A certificate could not be established at the given sample.
class CertificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace bifinf
