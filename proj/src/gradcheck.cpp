// SPDX-License-Identifier: Apache-2.0
#include "owlfed/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "owlfed/errors.hpp"

namespace owlfed {

namespace {

double probe(const ScalarFn& f, std::span<const double> x, std::size_t index) {
  const double v = f(x);
  if (!std::isfinite(v)) {
    throw NumericError("grad_check: non-finite function value while probing coordinate " +
                       std::to_string(index));
  }
  return v;
}

double central_difference(const ScalarFn& f, std::vector<double>& x, std::size_t i, double h) {
  const double orig = x[i];
  x[i] = orig + h;
  const double up = probe(f, x, i);
  x[i] = orig - h;
  const double down = probe(f, x, i);
  x[i] = orig;
  return (up - down) / (2.0 * h);
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

constexpr double kRefineBelow = 1e-6;

}  // namespace

std::vector<double> numeric_gradient(const ScalarFn& f, std::span<const double> point,
                                     double h) {
  std::vector<double> x(point.begin(), point.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) grad[i] = central_difference(f, x, i, h);
  return grad;
}

GradCheckResult grad_check(const ScalarFn& f, const GradientFn& gradient,
                           std::span<const double> point, double h) {
  const auto analytic = gradient(point);
  if (analytic.size() != point.size()) {
    throw DimensionError("grad_check: gradient has " + std::to_string(analytic.size()) +
                         " entries for a " + std::to_string(point.size()) + "-dim point");
  }
  std::vector<double> x(point.begin(), point.end());
  GradCheckResult result;
  for (std::size_t i = 0; i < point.size(); ++i) {
    if (!std::isfinite(analytic[i])) {
      throw NumericError("grad_check: non-finite analytic gradient at coordinate " +
                         std::to_string(i));
    }
    double numeric = central_difference(f, x, i, h);
    double err = relative_error(analytic[i], numeric);
    for (double shrink : {10.0, 100.0}) {
      if (err <= kRefineBelow) break;
      const double n = central_difference(f, x, i, h / shrink);
      const double e = relative_error(analytic[i], n);
      if (e < err) {
        err = e;
        numeric = n;
      }
    }
    if (i == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_index = i;
      result.worst_analytic = analytic[i];
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace owlfed
