#pragma once

#include <functional>
#include <span>
#include <vector>

#include "cortical/numcore/tape.hpp"

namespace cortical {

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one entry per input
  double worst = 0.0;
  bool passed = false;
};

// Builds a scalar loss on the given tape from leaves wrapping `inputs`.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Compares reverse-mode gradients of f against central differences.
// Relative error per element is |a - n| / max(|a|, |n|, 1e-6).
// Inputs must be f64. Throws NumericalError if any loss evaluation is
// not finite.
GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> inputs,
                           double step = 1e-5, double tol = 1e-4);

}  // namespace cortical
