// SPDX-License-Identifier: Apache-2.0
#include "owlfed/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "owlfed/errors.hpp"

namespace owlfed {

LossMode parse_loss_mode(std::string_view name) {
  if (name == "CE") return LossMode::kCrossEntropy;
  if (name == "CB-CE") return LossMode::kClassBalancedCrossEntropy;
  if (name == "CB-F") return LossMode::kClassBalancedFLoss;
  throw ArgumentError("unknown loss mode '" + std::string(name) + "' (expected CE|CB-CE|CB-F)");
}

std::string_view to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kCrossEntropy: return "CE";
    case LossMode::kClassBalancedCrossEntropy: return "CB-CE";
    case LossMode::kClassBalancedFLoss: return "CB-F";
  }
  return "?";
}

void LossConfig::validate(std::size_t classes) const {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw ArgumentError("LossConfig: beta must lie in [0, 1), got " + std::to_string(beta));
  }
  if (mode != LossMode::kCrossEntropy && class_counts.size() != classes) {
    throw ArgumentError("LossConfig: " + std::to_string(class_counts.size()) +
                        " class counts for " + std::to_string(classes) + " classes");
  }
}

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }
bool clamped(double p) { return p < kProbabilityClamp || p > 1.0 - kProbabilityClamp; }

void require_batch(const Tensor2& targets, const Tensor2& probs, const char* what) {
  if (probs.rows() == 0) throw ArgumentError(std::string(what) + ": empty batch");
  if (!targets.same_shape(probs)) {
    throw DimensionError(std::string(what) + ": targets " + targets.shape_string() +
                         " vs probs " + probs.shape_string());
  }
}

}  // namespace

Tensor2 one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor2 t(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw ArgumentError("one_hot: label " + std::to_string(labels[i]) + " outside 0.." +
                          std::to_string(classes - 1));
    }
    t(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return t;
}

double soft_f1(const Tensor2& targets, const Tensor2& probs, std::size_t c) {
  require_batch(targets, probs, "soft_f1");
  if (c >= probs.cols()) throw ArgumentError("soft_f1: class " + std::to_string(c) + " out of range");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    num += targets(i, c) * probs(i, c);
    den += targets(i, c) + probs(i, c);
  }
  return den == 0.0 ? 0.0 : 2.0 * num / den;
}

std::vector<double> soft_f1_per_class(const Tensor2& targets, const Tensor2& probs) {
  std::vector<double> out(probs.cols());
  for (std::size_t c = 0; c < probs.cols(); ++c) out[c] = soft_f1(targets, probs, c);
  return out;
}

double f_loss_term(double y, double p, double fg) {
  const double q = clamp_prob(p);
  return -(y * (y - 0.5 * fg) * std::log(q) + (1.0 - y) * 0.5 * fg * std::log(1.0 - q));
}

double f_loss_term_grad(double y, double p, double fg) {
  if (clamped(p)) return 0.0;
  return -y * (y - 0.5 * fg) / p + (1.0 - y) * 0.5 * fg / (1.0 - p);
}

LossComponents f_loss(const Tensor2& targets, const Tensor2& probs, std::span<const double> fg) {
  require_batch(targets, probs, "f_loss");
  if (fg.size() != probs.cols()) {
    throw DimensionError("f_loss: " + std::to_string(fg.size()) + " F_g values for " +
                         std::to_string(probs.cols()) + " classes");
  }
  for (double f : fg)
    if (!(f >= 0.0 && f <= 1.0)) throw ArgumentError("f_loss: F_g " + std::to_string(f) + " outside [0, 1]");
  LossComponents out;
  out.grad = Tensor2::zeros_like(probs);
  out.soft_f1.assign(fg.begin(), fg.end());
  out.cb_weights.assign(probs.cols(), 1.0);
  const double inv_b = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i)
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      out.loss += f_loss_term(targets(i, c), probs(i, c), fg[c]) * inv_b;
      out.grad(i, c) = f_loss_term_grad(targets(i, c), probs(i, c), fg[c]) * inv_b;
    }
  return out;
}

double cb_weight(double s, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) {
    throw ArgumentError("cb_weight: beta must lie in [0, 1), got " + std::to_string(beta));
  }
  if (!(s >= 0.0)) throw ArgumentError("cb_weight: negative sample count");
  return (1.0 - beta) / (1.0 - std::pow(beta, s + 1.0));
}

LossComponents cross_entropy(const Tensor2& targets, const Tensor2& probs) {
  require_batch(targets, probs, "cross_entropy");
  LossComponents out;
  out.grad = Tensor2::zeros_like(probs);
  out.cb_weights.assign(probs.cols(), 1.0);
  const double inv_b = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i)
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      const double y = targets(i, c);
      if (y == 0.0) continue;
      const double p = probs(i, c);
      out.loss -= y * std::log(clamp_prob(p)) * inv_b;
      if (!clamped(p)) out.grad(i, c) = -y / p * inv_b;
    }
  return out;
}

LossComponents combined_loss(std::span<const int> labels, const Tensor2& probs,
                             const LossConfig& config,
                             std::optional<std::span<const double>> detached_fg) {
  const std::size_t classes = probs.cols();
  config.validate(classes);
  if (labels.size() != probs.rows()) {
    throw DimensionError("combined_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(probs.rows()) + " probability rows");
  }
  const Tensor2 targets = one_hot(labels, classes);

  if (config.mode == LossMode::kCrossEntropy) return cross_entropy(targets, probs);

  std::vector<double> cb(classes);
  for (std::size_t c = 0; c < classes; ++c)
    cb[c] = cb_weight(static_cast<double>(config.class_counts[c]), config.beta);

  LossComponents base;
  if (config.mode == LossMode::kClassBalancedCrossEntropy) {
    base = cross_entropy(targets, probs);
  } else {
    const std::vector<double> fg =
        detached_fg ? std::vector<double>(detached_fg->begin(), detached_fg->end())
                    : soft_f1_per_class(targets, probs);
    base = f_loss(targets, probs, fg);
  }

  // Re-weight each sample's contribution by the CB weight of its target class.
  LossComponents out;
  out.grad = Tensor2::zeros_like(probs);
  out.soft_f1 = std::move(base.soft_f1);
  out.cb_weights = cb;
  const double inv_b = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double w = cb[static_cast<std::size_t>(labels[i])];
    double sample_loss = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double y = targets(i, c);
      const double p = probs(i, c);
      if (config.mode == LossMode::kClassBalancedCrossEntropy) {
        if (y != 0.0) sample_loss -= y * std::log(clamp_prob(p));
      } else {
        sample_loss += f_loss_term(y, p, out.soft_f1[c]);
      }
      out.grad(i, c) = w * base.grad(i, c);
    }
    out.loss += w * sample_loss * inv_b;
  }
  return out;
}

}  // namespace owlfed
