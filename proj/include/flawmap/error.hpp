#pragma once

#include <stdexcept>
#include <string>

namespace flawmap {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violated a documented precondition or value range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Reading or writing a file failed, or an encoded payload is malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flawmap
