// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "owlfed/tensor.hpp"

namespace owlfed {

enum class OptimizerKind { kPlain, kAdamW };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdamW;
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Per-parameter moment buffers plus step counter. Moments are created on the
/// first AdamW step with the shapes of the parameters they track.
struct OptimState {
  OptimizerConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor2> first_moment;
  std::vector<Tensor2> second_moment;
};

/// One update. Plain: theta -= lr * grad. AdamW: bias-corrected Adam with
/// decoupled weight decay (theta -= lr * wd * theta before the Adam step).
/// Throws NumericError, leaving params and state untouched, when any gradient
/// entry is non-finite; DimensionError when shapes disagree.
void optimizer_step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads,
                    OptimState& state);

}  // namespace owlfed
