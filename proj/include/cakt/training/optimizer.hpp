// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "cakt/numerics/parameter.hpp"

namespace cakt::training {

/// Adam with bias correction. Moments are keyed by parameter name and each
/// parameter keeps its own step count, so a group that is unfrozen late
/// starts its bias correction from 1.
class Adam {
 public:
  struct Slot {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;
  };

  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Updates every unfrozen parameter from its grad. Frozen ones are left
  /// untouched, moments included.
  void step(const ParameterList& params, double lr);

  const std::map<std::string, Slot>& slots() const { return slots_; }
  std::map<std::string, Slot>& slots() { return slots_; }

  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }

 private:
  double beta1_, beta2_, eps_;
  std::map<std::string, Slot> slots_;
};

}  // namespace cakt::training
