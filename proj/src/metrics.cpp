// SPDX-License-Identifier: Apache-2.0
#include "owlfed/metrics.hpp"

#include <string>

#include "owlfed/errors.hpp"

namespace owlfed {

AbsentClassPolicy parse_absent_class_policy(std::string_view name) {
  if (name == "strict") return AbsentClassPolicy::kStrict;
  if (name == "present") return AbsentClassPolicy::kPresent;
  throw ArgumentError("unknown absent-class policy '" + std::string(name) + "' (expected strict|present)");
}

std::string_view to_string(AbsentClassPolicy policy) {
  return policy == AbsentClassPolicy::kStrict ? "strict" : "present";
}

EvalResult evaluate(std::span<const int> preds, std::span<const int> labels, std::size_t classes,
                    AbsentClassPolicy policy) {
  if (preds.empty() || labels.empty()) throw ArgumentError("evaluate: empty input");
  if (preds.size() != labels.size()) {
    throw ArgumentError("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  }
  if (classes == 0) throw ArgumentError("evaluate: zero classes");
  auto check = [classes](int id, const char* what) {
    if (id < 0 || static_cast<std::size_t>(id) >= classes) {
      throw ArgumentError(std::string("evaluate: ") + what + " id " + std::to_string(id) +
                          " outside 0.." + std::to_string(classes - 1));
    }
    return static_cast<std::size_t>(id);
  };

  EvalResult r;
  r.count = preds.size();
  r.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) ++r.confusion[check(labels[i], "label")][check(preds[i], "pred")];

  std::size_t correct = 0;
  for (std::size_t c = 0; c < classes; ++c) correct += r.confusion[c][c];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.count);

  r.precision.assign(classes, 0.0);
  r.recall.assign(classes, 0.0);
  r.f1.assign(classes, 0.0);
  double f1_sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t support = 0, predicted = 0;
    for (std::size_t o = 0; o < classes; ++o) {
      support += r.confusion[c][o];
      predicted += r.confusion[o][c];
    }
    const double tp = static_cast<double>(r.confusion[c][c]);
    if (predicted > 0) r.precision[c] = tp / static_cast<double>(predicted);
    if (support > 0) r.recall[c] = tp / static_cast<double>(support);
    // 2TP / (2TP + FP + FN), which is 0 whenever TP is 0.
    if (support + predicted > 0) r.f1[c] = 2.0 * tp / static_cast<double>(support + predicted);
    if (policy == AbsentClassPolicy::kPresent && support + predicted == 0) continue;
    f1_sum += r.f1[c];
    ++counted;
  }
  r.macro_f1 = counted == 0 ? 0.0 : f1_sum / static_cast<double>(counted);
  return r;
}

}  // namespace owlfed
