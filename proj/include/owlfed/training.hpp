// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "owlfed/data.hpp"
#include "owlfed/loss.hpp"
#include "owlfed/metrics.hpp"
#include "owlfed/model.hpp"
#include "owlfed/optim.hpp"
#include "owlfed/rng.hpp"

namespace owlfed {

/// Local training knobs shared by federated clients and fine-tuning.
struct LocalTrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  OptimizerConfig optimizer;
  LossMode loss_mode = LossMode::kClassBalancedFLoss;
  double beta = kDefaultBeta;
  /// Label-derived attention masks during training.
  bool train_mask = true;
  /// Masks used when evaluating (labels are unknown at inference).
  MaskSource eval_mask = MaskSource::kNone;
  AbsentClassPolicy absent_class = AbsentClassPolicy::kStrict;
};

/// Windows usable for training: all of them, or, with masking on, those
/// that keep at least one unmasked position.
std::vector<const WindowSample*> trainable(std::span<const WindowSample> samples, bool masked);

/// One shuffled pass of mini-batch updates. Returns the mean batch loss.
double train_epoch(ModelParams& params, OptimState& state,
                   std::span<const WindowSample* const> samples, const LossConfig& loss,
                   const LocalTrainConfig& config, Rng& rng);

/// Class probabilities for every sample, evaluated in fixed-size chunks.
Tensor2 predict_probs(const ModelParams& params, std::span<const WindowSample* const> samples,
                      MaskSource masks);

/// Full-set objective: probabilities of all samples, one combined_loss over them.
double dataset_loss(const ModelParams& params, std::span<const WindowSample* const> samples,
                    const LossConfig& loss, MaskSource masks);

EvalResult evaluate_model(const ModelParams& params, std::span<const WindowSample> samples,
                          MaskSource masks, AbsentClassPolicy policy = AbsentClassPolicy::kStrict);

struct FinetuneResult {
  ModelParams params;
  /// Full-set loss on the fine-tune data before training and after each round.
  std::vector<double> round_loss;
};

/// Called after every fine-tune round with the round number (1-based).
using FinetuneCallback = std::function<void(std::size_t round, const ModelParams& params)>;

/// Continues training a copy of the global model on one well's windows; one
/// round is one epoch. Class-balanced counts come from the fine-tune data.
/// Throws ArgumentError on empty data.
FinetuneResult finetune(const ModelParams& global, std::span<const WindowSample> data,
                        std::size_t rounds, const LocalTrainConfig& config, std::uint64_t seed,
                        const FinetuneCallback& on_round = {});

}  // namespace owlfed
