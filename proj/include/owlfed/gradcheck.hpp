// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace owlfed {

using ScalarFn = std::function<double(std::span<const double>)>;
using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

inline constexpr double kGradCheckStep = 1e-4;

/// Compares the analytic gradient against central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate. The per-coordinate
/// error is |analytic - numeric| / max(1, |analytic|). A coordinate that
/// misses 1e-6 is re-probed with steps h/10 and h/100 and keeps its smallest
/// error: a difference quotient that straddles a ReLU kink converges as the
/// step shrinks, a wrong analytic gradient does not.
/// Throws NumericError if f is non-finite at any probe point.
GradCheckResult grad_check(const ScalarFn& f, const GradientFn& gradient,
                           std::span<const double> point, double h = kGradCheckStep);

/// Central-difference gradient alone.
std::vector<double> numeric_gradient(const ScalarFn& f, std::span<const double> point,
                                     double h = kGradCheckStep);

}  // namespace owlfed
