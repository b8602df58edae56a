#include "cortical/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace cortical {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(tape.constant(t));
  const double v = f(tape, leaves).value().item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarFn& f, std::span<const Tensor> inputs, double step,
                           double tol) {
  for (const Tensor& t : inputs) {
    if (t.dtype() != DType::f64) throw TypeError("grad_check inputs must be f64");
  }

  Tape tape;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(tape.param(t));
  Var loss = f(tape, leaves);
  if (!std::isfinite(loss.value().item())) throw NumericalError("grad_check: loss is not finite");
  tape.backward(loss);

  GradCheckReport report;
  std::vector<Tensor> work(inputs.begin(), inputs.end());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(leaves[k]);
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double x0 = inputs[k].get(i);
      work[k].set(i, x0 + step);
      const double up = evaluate(f, work);
      work[k].set(i, x0 - step);
      const double down = evaluate(f, work);
      work[k].set(i, x0);
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.get(i);
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.max_rel_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  report.passed = report.worst <= tol;
  return report;
}

}  // namespace cortical
