// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>

#include "owlfed/errors.hpp"
#include "owlfed/metrics.hpp"
#include "owlfed/rng.hpp"

using namespace owlfed;

TEST(Metrics, SmallExample) {
  const std::vector<int> labels{1, 1, 0}, preds{1, 0, 0};
  const auto r = evaluate(preds, labels, 2);
  EXPECT_NEAR(r.accuracy, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.f1[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.f1[1], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.macro_f1, 0.6667, 1e-4);
  EXPECT_EQ(r.confusion[1][0], 1u);
  EXPECT_EQ(r.count, 3u);
}

TEST(Metrics, MatchesNaiveConfusionArithmetic) {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + uniform_index(rng, 60), classes = 2 + uniform_index(rng, 4);
    std::vector<int> labels(n), preds(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(uniform_index(rng, classes));
      preds[i] = uniform01(rng) < 0.5 ? labels[i] : static_cast<int>(uniform_index(rng, classes));
    }
    const auto r = evaluate(preds, labels, classes);
    double macro = 0.0;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool p = preds[i] == static_cast<int>(c), l = labels[i] == static_cast<int>(c);
        tp += p && l;
        fp += p && !l;
        fn += !p && l;
      }
      correct += tp;
      const double precision = tp + fp ? double(tp) / double(tp + fp) : 0.0;
      const double recall = tp + fn ? double(tp) / double(tp + fn) : 0.0;
      const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
      EXPECT_NEAR(r.f1[c], f1, 1e-12);
      EXPECT_NEAR(r.precision[c], precision, 1e-12);
      EXPECT_NEAR(r.recall[c], recall, 1e-12);
      macro += f1 / double(classes);
    }
    EXPECT_NEAR(r.macro_f1, macro, 1e-12);
    EXPECT_NEAR(r.accuracy, double(correct) / double(n), 1e-12);
    EXPECT_GE(r.macro_f1, 0.0);
    EXPECT_LE(r.macro_f1, 1.0);
  }
}

TEST(Metrics, InvariantUnderJointPermutation) {
  Rng rng(2);
  std::vector<int> labels(40), preds(40);
  for (std::size_t i = 0; i < 40; ++i) {
    labels[i] = static_cast<int>(uniform_index(rng, 5));
    preds[i] = static_cast<int>(uniform_index(rng, 5));
  }
  const auto a = evaluate(preds, labels, 5);
  std::vector<std::size_t> order(40);
  for (std::size_t i = 0; i < 40; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> l2, p2;
  for (auto i : order) {
    l2.push_back(labels[i]);
    p2.push_back(preds[i]);
  }
  const auto b = evaluate(p2, l2, 5);
  EXPECT_EQ(a.confusion, b.confusion);
  EXPECT_DOUBLE_EQ(a.macro_f1, b.macro_f1);
}

TEST(Metrics, AbsentClassPolicy) {
  const std::vector<int> labels{0, 1, 0, 1}, preds{0, 1, 0, 1};
  EXPECT_DOUBLE_EQ(evaluate(preds, labels, 4).macro_f1, 0.5);
  EXPECT_DOUBLE_EQ(evaluate(preds, labels, 4, AbsentClassPolicy::kPresent).macro_f1, 1.0);
  EXPECT_DOUBLE_EQ(evaluate(preds, labels, 4).accuracy, 1.0);
  EXPECT_EQ(parse_absent_class_policy("present"), AbsentClassPolicy::kPresent);
  EXPECT_THROW(parse_absent_class_policy("lenient"), ArgumentError);
}

TEST(Metrics, DiagonalWithAllClassesGivesOne) {
  const std::vector<int> labels{0, 1, 2, 2};
  EXPECT_DOUBLE_EQ(evaluate(labels, labels, 3).macro_f1, 1.0);
}

TEST(Metrics, Errors) {
  const std::vector<int> a{0, 1}, b{0}, empty, bad{0, 3};
  EXPECT_THROW(evaluate(a, b, 2), ArgumentError);
  EXPECT_THROW(evaluate(empty, empty, 2), ArgumentError);
  EXPECT_THROW(evaluate(bad, a, 2), ArgumentError);
}
