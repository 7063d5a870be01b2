// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace owlfed {

struct GradcheckOptions {
  std::size_t draws = 100;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  /// Harness self-test: perturbs the analytic gradient of the named check.
  std::string corrupt;
};

struct GradcheckLine {
  std::string name;
  std::size_t draws = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

/// Names of all checks, in report order.
std::vector<std::string> gradcheck_names();

/// Central differences against the analytic gradient of every tape op, the
/// attention and pooling ops, a small full model and each loss mode, over
/// fresh random draws. One line per checked function.
std::vector<GradcheckLine> run_gradcheck_suite(const GradcheckOptions& options = {});

}  // namespace owlfed
