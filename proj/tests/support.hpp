#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cortical/numcore/rng.hpp"
#include "cortical/numcore/tensor.hpp"

namespace testsupport {

inline cortical::Tensor random_tensor(cortical::Rng& rng, cortical::Shape shape,
                                      double lo = -1.0, double hi = 1.0,
                                      cortical::DType dtype = cortical::DType::f64) {
  cortical::Tensor t(std::move(shape), dtype);
  for (std::size_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
  return t;
}

// Central difference of a scalar function of a flat parameter vector.
template <typename F>
std::vector<double> numeric_gradient(F&& f, std::vector<double> x, double step = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + step;
    const double up = f(x);
    x[i] = x0 - step;
    const double down = f(x);
    x[i] = x0;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double rel_err(double a, double b) {
  const double d = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / d;
}

}  // namespace testsupport
