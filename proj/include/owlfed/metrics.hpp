// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace owlfed {

/// How a class with no support and no predictions enters the macro average.
enum class AbsentClassPolicy {
  kStrict,   ///< contributes F1 = 0, denominator stays C
  kPresent,  ///< skipped; average over classes seen in labels or preds
};

AbsentClassPolicy parse_absent_class_policy(std::string_view name);
std::string_view to_string(AbsentClassPolicy policy);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  double macro_f1 = 0.0;
  /// confusion[label][pred]
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t count = 0;
};

/// Throws ArgumentError on empty input, length mismatch or ids outside [0, classes).
EvalResult evaluate(std::span<const int> preds, std::span<const int> labels, std::size_t classes,
                    AbsentClassPolicy policy = AbsentClassPolicy::kStrict);

}  // namespace owlfed
