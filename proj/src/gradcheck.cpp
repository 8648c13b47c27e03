#include "xmh/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "xmh/errors.hpp"

namespace xmh {

GradCheckReport finite_diff_check(const ScalarFunction& f, const GradientFunction& grad, const Tensor& x,
                                  double tol, double h, double floor) {
  const double f0 = f(x);
  if (!std::isfinite(f0)) throw NumericError("finite_diff_check: f(x) is not finite");
  const Tensor analytic = grad(x);
  if (analytic.shape() != x.shape()) throw DimensionError("finite_diff_check: gradient shape mismatch");

  GradCheckReport report;
  report.tol = tol;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down)) throw NumericError("finite_diff_check: non-finite probe");
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace xmh
