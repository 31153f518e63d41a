#pragma once

#include <stdexcept>

namespace gridclear {

// Anything wrong with input data or option files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An optimization model could not be solved to optimality.
class SolveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal assumption (singular matrix that cannot be singular, ...).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace gridclear
