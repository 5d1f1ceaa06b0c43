#pragma once

#include <stdexcept>
#include <string>

namespace edgetree {

// Base for every failure raised by the library. The CLI maps it to a
// nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ModelFormatError : public Error {
 public:
  using Error::Error;
};

class ToolchainError : public Error {
 public:
  using Error::Error;
};

// A compiled artifact disagreed with the in-memory tree.
class EquivalenceError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgetree
