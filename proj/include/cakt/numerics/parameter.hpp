// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cakt/numerics/tensor.hpp"

namespace cakt {

/// A named learnable tensor with its gradient buffer.
///
/// Reads through value() are counted so callers can prove that a code path
/// never touched a given parameter (the decode path must not read KT or
/// teacher weights).
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Tensor value, bool frozen = false);

  const std::string& name() const { return name_; }

  const Tensor& value() const {
    ++reads_;
    return value_;
  }
  Tensor& mutable_value() { return value_; }

  const Tensor& grad() const { return grad_; }
  Tensor& mutable_grad() { return grad_; }
  void zero_grad() { grad_.fill(0.0); }

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen) { frozen_ = frozen; }

  std::size_t size() const { return value_.size(); }
  std::size_t access_count() const { return reads_; }
  void reset_access_count() { reads_ = 0; }

 private:
  std::string name_;
  Tensor value_;
  Tensor grad_;
  bool frozen_ = false;
  mutable std::size_t reads_ = 0;
};

using ParameterList = std::vector<Parameter*>;

std::size_t parameter_count(const ParameterList& params);

}  // namespace cakt
