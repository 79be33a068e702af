#pragma once

#include <stdexcept>
#include <string>

namespace qadim {

// Base class for everything the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition or validation failure on user-supplied values (CLI exit code 1).
class DomainError : public Error {
 public:
  using Error::Error;
};

// File system or serialization failure (CLI exit code 2).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace qadim
