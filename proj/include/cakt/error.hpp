// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace cakt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

/// Raised when a label sequence cannot be aligned to the available frames.
class InfeasibleError : public DataError {
 public:
  using DataError::DataError;
};

/// NaN/Inf produced anywhere in the compute graph.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cakt
