#pragma once

#include <stdexcept>
#include <string>

namespace pnpula {

// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Singular or non-SPD covariance/precision, failed Cholesky.
class DegenerateModelError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Empty sample sets, zero-variance correlation inputs.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Problem size above a hard computational guard.
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Non-finite or exploding Markov chain state.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace pnpula
