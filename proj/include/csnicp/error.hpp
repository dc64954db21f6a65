#pragma once

#include <stdexcept>
#include <string>

namespace csnicp {

// Base for every failure raised by the library. The CLI maps all of these to
// exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Rank-deficient point configurations (fewer than 3 pairs, collinear sets).
class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

// Too few correspondences survived rejection.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace csnicp
