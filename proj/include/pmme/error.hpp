#pragma once

#include <stdexcept>
#include <string>

namespace pmme {

/// Input that violates a documented invariant (bad file, bad parameters).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation produced non-finite values or failed to converge.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pmme
