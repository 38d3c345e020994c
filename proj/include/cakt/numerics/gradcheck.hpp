// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cakt/numerics/parameter.hpp"
#include "cakt/numerics/tape.hpp"

namespace cakt {

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // Coordinates whose gradient is tiny relative to the group's largest one
  // are judged against this fraction of that largest gradient instead of
  // their own magnitude; central differences cannot resolve them otherwise.
  double relative_floor = 1e-3;
  // Denominator floor in units of max(1, |loss|). Gradients that are zero
  // in exact arithmetic (attention key biases) only carry roundoff, and that
  // roundoff grows with the loss value.
  double absolute_floor = 1e-5;
};

struct GroupReport {
  std::string name;
  std::size_t coordinates = 0;
  bool skipped_frozen = false;
  double max_rel_err = 0.0;
  double max_abs_grad = 0.0;
};

struct GradCheckReport {
  std::vector<GroupReport> groups;
  double max_rel_err = 0.0;
  double tol = 0.0;
  double min_relu_gap = 0.0;
  bool passed = false;

  std::string to_string() const;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossFn = std::function<Var(Tape&)>;

/// Compares tape gradients against central differences
/// (f(θ + eps) - f(θ - eps)) / (2 eps) for every coordinate of every
/// unfrozen parameter. Frozen parameters are reported as skipped. Parameter
/// values are restored afterwards; gradients are left holding the analytic
/// result.
GradCheckReport finite_difference_check(const ParameterList& params, const LossFn& loss,
                                        const GradCheckOptions& options = {});

}  // namespace cakt
