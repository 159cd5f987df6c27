#pragma once

#include <stdexcept>
#include <string>

namespace embc {

// Base for everything the toolkit throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed files, bad arguments, out-of-vocabulary queries.
class InputError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, degenerate statistics.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace embc
