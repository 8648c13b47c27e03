#pragma once

#include <cstddef>
#include <functional>

#include "xmh/tensor.hpp"

namespace xmh {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double tol = 0.0;
  bool passed = false;
};

using ScalarFunction = std::function<double(const Tensor&)>;
using GradientFunction = std::function<Tensor(const Tensor&)>;

/// Compares an analytic gradient against central differences at step h.
///
/// Relative error per coordinate is |a - n| / max(|a|, |n|, floor); the floor
/// keeps coordinates with near-zero gradient from dividing by roundoff.
/// Throws NumericError if f is not finite at x.
GradCheckReport finite_diff_check(const ScalarFunction& f, const GradientFunction& grad, const Tensor& x,
                                  double tol, double h = 1e-5, double floor = 1e-3);

}  // namespace xmh
