#pragma once

#include <stdexcept>
#include <string>

namespace knockoffs {

// Raised when a model or knockoff construction cannot be built, e.g. a
// covariance that fails Cholesky factorization.
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition that is not a plain argument
// error (e.g. pooled priors without the shared-null assertion).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Input data cannot be used (degenerate response, non-numeric values, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace knockoffs
