#pragma once

#include <stdexcept>
#include <string>

namespace ccopf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent case data. The message names the offending element.
class CaseError : public Error {
 public:
  using Error::Error;
};

class ModelError : public Error {
 public:
  using Error::Error;
};

class PolicyError : public Error {
 public:
  using Error::Error;
};

}  // namespace ccopf
