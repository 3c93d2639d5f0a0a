#pragma once

#include <stdexcept>
#include <string>

namespace rh {

/// Bad configuration or input; maps to CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical breakdown (singular factorization, infinite norm, ...).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The nominal interconnection is not stable, so no small-gain
/// certificate can be issued.
class AssumptionViolated : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rh
