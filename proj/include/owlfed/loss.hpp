// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "owlfed/tensor.hpp"

namespace owlfed {

enum class LossMode {
  kCrossEntropy,               ///< "CE"
  kClassBalancedCrossEntropy,  ///< "CB-CE"
  kClassBalancedFLoss,         ///< "CB-F"
};

/// Accepts "CE", "CB-CE", "CB-F". Throws ArgumentError otherwise.
LossMode parse_loss_mode(std::string_view name);
std::string_view to_string(LossMode mode);

inline constexpr double kDefaultBeta = 0.9999;
/// Probabilities are clamped to [eps, 1 - eps] before any log.
inline constexpr double kProbabilityClamp = 1e-7;

struct LossConfig {
  double beta = kDefaultBeta;
  /// Raw per-class sample counts of the caller's train split.
  std::vector<std::size_t> class_counts;
  LossMode mode = LossMode::kClassBalancedFLoss;

  void validate(std::size_t classes) const;
};

struct LossComponents {
  double loss = 0.0;
  /// dL/dp, same shape as probs. F_g is treated as a constant.
  Tensor2 grad;
  /// Batch soft F1 per class (empty for CE modes).
  std::vector<double> soft_f1;
  /// Class-balanced weight per class (all 1 in CE mode).
  std::vector<double> cb_weights;
};

Tensor2 one_hot(std::span<const int> labels, std::size_t classes);

/// Batch soft F1 of class c: 2 sum(y p) / sum(y + p); 0 when the denominator is 0.
double soft_f1(const Tensor2& targets, const Tensor2& probs, std::size_t c);
std::vector<double> soft_f1_per_class(const Tensor2& targets, const Tensor2& probs);

/// One one-vs-rest term -(y (y - F/2) log p + (1 - y) (F/2) log(1 - p)) with p clamped.
double f_loss_term(double y, double p, double fg);
/// d f_loss_term / dp; zero where the clamp is active.
double f_loss_term_grad(double y, double p, double fg);

/// Terms summed over classes and averaged over the batch. fg holds one
/// value per class in [0, 1], else ArgumentError.
LossComponents f_loss(const Tensor2& targets, const Tensor2& probs, std::span<const double> fg);

/// (1 - beta) / (1 - beta^(s + 1)). Throws ArgumentError unless 0 <= beta < 1, s >= 0.
double cb_weight(double s, double beta);

/// -sum(y log p) averaged over the batch.
LossComponents cross_entropy(const Tensor2& targets, const Tensor2& probs);

/// Batch objective: CE, CB(s_y) * CE or CB(s_y) * F_Loss per sample, averaged.
/// detached_fg overrides the batch soft F1 (used to probe gradients at fixed F_g).
LossComponents combined_loss(std::span<const int> labels, const Tensor2& probs,
                             const LossConfig& config,
                             std::optional<std::span<const double>> detached_fg = std::nullopt);

}  // namespace owlfed
