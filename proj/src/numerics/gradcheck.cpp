// SPDX-License-Identifier: Apache-2.0
#include "cakt/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cakt {

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  os.precision(3);
  for (const auto& g : groups) {
    os << "  " << g.name << ": ";
    if (g.skipped_frozen) {
      os << "skipped (frozen)\n";
    } else {
      os << std::scientific << "max rel err " << g.max_rel_err << " over " << g.coordinates
         << " coords (|g|max " << g.max_abs_grad << ")\n";
    }
  }
  os << std::scientific << "  overall max rel err " << max_rel_err << " (tol " << tol << ") "
     << (passed ? "PASS" : "FAIL");
  return os.str();
}

GradCheckReport finite_difference_check(const ParameterList& params, const LossFn& loss,
                                        const GradCheckOptions& options) {
  GradCheckReport report;
  report.tol = options.tol;

  for (auto* p : params) p->zero_grad();
  double loss_scale = 1.0;
  {
    Tape tape;
    Var l = loss(tape);
    loss_scale = std::max(1.0, std::abs(l.value().item()));
    tape.backward(l);
    report.min_relu_gap = tape.min_relu_gap();
  }

  auto evaluate = [&loss]() {
    Tape tape;
    return loss(tape).value().item();
  };

  for (auto* p : params) {
    GroupReport group;
    group.name = p->name();
    if (p->frozen()) {
      group.skipped_frozen = true;
      report.groups.push_back(group);
      continue;
    }
    const Tensor& analytic = p->grad();
    Tensor numeric(analytic.shape());
    auto& value = p->mutable_value();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + options.eps;
      const double up = evaluate();
      value[i] = orig - options.eps;
      const double down = evaluate();
      value[i] = orig;
      numeric[i] = (up - down) / (2.0 * options.eps);
    }
    double scale = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      scale = std::max({scale, std::abs(numeric[i]), std::abs(analytic[i])});
    }
    const double floor = std::max(options.relative_floor * scale, options.absolute_floor * loss_scale);
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double den = std::max({std::abs(numeric[i]), std::abs(analytic[i]), floor});
      group.max_rel_err = std::max(group.max_rel_err, std::abs(numeric[i] - analytic[i]) / den);
    }
    group.coordinates = value.size();
    group.max_abs_grad = scale;
    report.max_rel_err = std::max(report.max_rel_err, group.max_rel_err);
    report.groups.push_back(group);
  }
  report.passed = report.max_rel_err < options.tol;
  return report;
}

}  // namespace cakt
