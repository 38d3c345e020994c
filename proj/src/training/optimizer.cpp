// SPDX-License-Identifier: Apache-2.0
#include "cakt/training/optimizer.hpp"

#include <cmath>

#include "cakt/error.hpp"

namespace cakt::training {

void Adam::step(const ParameterList& params, double lr) {
  for (auto* p : params) {
    if (p->frozen()) continue;
    auto& slot = slots_[p->name()];
    const Tensor& value = p->mutable_value();
    if (slot.m.empty()) {
      slot.m = Tensor(value.shape(), 0.0);
      slot.v = Tensor(value.shape(), 0.0);
    } else if (slot.m.shape() != value.shape()) {
      throw ShapeError("adam: moment shape " + shape_string(slot.m.shape()) + " does not match " +
                       p->name() + " " + shape_string(value.shape()));
    }
    ++slot.t;
    const double t = static_cast<double>(slot.t);
    const double c1 = 1.0 - std::pow(beta1_, t);
    const double c2 = 1.0 - std::pow(beta2_, t);
    Tensor& w = p->mutable_value();
    const Tensor& g = p->grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g[i];
      slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = slot.m[i] / c1;
      const double vhat = slot.v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace cakt::training
