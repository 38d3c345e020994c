// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "cakt/numerics/ops.hpp"
#include "cakt/numerics/random.hpp"
#include "cakt/numerics/tape.hpp"

namespace cakt::testing {

// Central-difference oracle on a free input, independent of Tape::backward.
inline Tensor numeric_grad(const Tensor& x, const std::function<double(const Tensor&)>& f,
                           double eps = 1e-5) {
  Tensor g(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2 * eps);
  }
  return g;
}

inline double max_rel_err(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    m = std::max(m, std::abs(a[i] - b[i]) / den);
  }
  return m;
}

using ScalarGraph = std::function<Var(Tape&, Var)>;

inline double eval_graph(const ScalarGraph& f, const Tensor& x) {
  Tape t;
  return f(t, t.constant(x)).value().item();
}

inline Tensor tape_grad(const ScalarGraph& f, const Tensor& x) {
  Tape t;
  Var v = t.variable(x);
  Var l = f(t, v);
  t.backward(l);
  return t.grad(v);
}

/// Relative error of the tape gradient of f at x against central differences.
inline double grad_error(const ScalarGraph& f, const Tensor& x, double eps = 1e-5) {
  const Tensor analytic = tape_grad(f, x);
  const Tensor numeric = numeric_grad(x, [&](const Tensor& p) { return eval_graph(f, p); }, eps);
  return max_rel_err(analytic, numeric);
}

/// Fixed random projection turning any tensor into a scalar with a
/// non-trivial gradient.
inline Var weighted_sum(Var x, std::uint64_t seed = 99) {
  Rng rng(seed);
  Tensor w = randn(x.value().shape(), 1.0, rng);
  return ops::sum(ops::mul(x, x.tape().constant(w)));
}

}  // namespace cakt::testing
