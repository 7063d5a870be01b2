// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "owlfed/errors.hpp"
#include "owlfed/training.hpp"
#include "test_support.hpp"

using namespace owlfed;
using owlfed::testing::tiny_experiment;

namespace {

struct Fixture {
  ExperimentConfig cfg = tiny_experiment(1);
  Workspace ws = prepare_workspace(cfg);
  const std::vector<WindowSample>& data() const { return ws.clients[0].split.train; }
};

}  // namespace

TEST(Training, TrainableSkipsFullyMaskedWindowsOnlyWhenMasking) {
  std::vector<int> labels(12, kDryLayer);
  labels[0] = 0;
  const auto windows = make_windows(owlfed::testing::make_series("W", "B", labels), 3);
  EXPECT_EQ(trainable(windows, false).size(), windows.size());
  EXPECT_EQ(trainable(windows, true).size(), 1u);
}

TEST(Finetune, ZeroRoundsReturnsTheGlobalModel) {
  Fixture f;
  const auto r = finetune(f.ws.initial, f.data(), 0, f.cfg.local_train(), 9);
  EXPECT_EQ(r.params, f.ws.initial);
  EXPECT_EQ(r.round_loss.size(), 1u);
}

TEST(Finetune, DeterministicInSeed) {
  Fixture f;
  const auto a = finetune(f.ws.initial, f.data(), 2, f.cfg.local_train(), 9);
  const auto b = finetune(f.ws.initial, f.data(), 2, f.cfg.local_train(), 9);
  const auto c = finetune(f.ws.initial, f.data(), 2, f.cfg.local_train(), 10);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.round_loss, b.round_loss);
  EXPECT_NE(a.params, c.params);
}

TEST(Finetune, LossMostlyDecreases) {
  Fixture f;
  auto train = f.cfg.local_train();
  train.optimizer.learning_rate = 1e-3;
  std::size_t calls = 0;
  const auto r = finetune(f.ws.initial, f.data(), 10, train, 4, [&](std::size_t round, const ModelParams&) {
    EXPECT_EQ(round, ++calls);
  });
  EXPECT_EQ(calls, 10u);
  ASSERT_EQ(r.round_loss.size(), 11u);
  std::size_t non_increasing = 0;
  for (std::size_t i = 1; i < r.round_loss.size(); ++i) non_increasing += r.round_loss[i] <= r.round_loss[i - 1];
  EXPECT_GE(non_increasing, 8u);
  EXPECT_LT(r.round_loss.back(), r.round_loss.front());
}

TEST(Finetune, EmptyDataIsAnError) {
  Fixture f;
  EXPECT_THROW(finetune(f.ws.initial, std::span<const WindowSample>{}, 1, f.cfg.local_train(), 0), ArgumentError);
}

TEST(Training, EvaluateModelMatchesPredictions) {
  Fixture f;
  const auto& test = f.ws.clients[0].split.test;
  const auto r = evaluate_model(f.ws.initial, test, MaskSource::kNone);
  const auto preds = predict(f.ws.initial, test);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) correct += preds[i] == test[i].label;
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(correct) / static_cast<double>(test.size()));
}
