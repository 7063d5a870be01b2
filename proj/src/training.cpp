// SPDX-License-Identifier: Apache-2.0
#include "owlfed/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "owlfed/errors.hpp"

namespace owlfed {

namespace {

constexpr std::size_t kEvalChunk = 128;

std::vector<int> labels_of(std::span<const WindowSample* const> samples) {
  std::vector<int> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i]->label;
  return out;
}

MaskSource train_masks(const LocalTrainConfig& config) {
  return config.train_mask ? MaskSource::kLabels : MaskSource::kNone;
}

}  // namespace

std::vector<const WindowSample*> trainable(std::span<const WindowSample> samples, bool masked) {
  std::vector<const WindowSample*> out;
  out.reserve(samples.size());
  for (const auto& s : samples)
    if (!masked || !s.fully_masked()) out.push_back(&s);
  return out;
}

double train_epoch(ModelParams& params, OptimState& state,
                   std::span<const WindowSample* const> samples, const LossConfig& loss,
                   const LocalTrainConfig& config, Rng& rng) {
  if (samples.empty()) throw ArgumentError("train_epoch: no training samples");
  if (config.batch_size == 0) throw ArgumentError("train_epoch: batch size must be positive");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(order.begin(), order.end(), rng);

  const MaskSource masks = train_masks(config);
  double total = 0.0;
  std::size_t batches = 0;
  std::vector<const WindowSample*> batch;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);

    ForwardResult fwd = forward(params, std::span<const WindowSample* const>(batch), masks);
    const std::vector<int> labels = labels_of(batch);
    const LossComponents lc = combined_loss(labels, fwd.probs, loss);
    if (!std::isfinite(lc.loss)) throw NumericError("train_epoch: non-finite loss");
    const Tensor2 dlogits = softmax_rows_backward(fwd.probs, lc.grad);
    const ModelParams grads = backward(fwd.cache, dlogits);
    const std::vector<const Tensor2*> g = grads.tensors();
    const std::vector<Tensor2*> p = params.tensors();
    optimizer_step(p, g, state);
    total += lc.loss;
    ++batches;
  }
  return total / static_cast<double>(batches);
}

Tensor2 predict_probs(const ModelParams& params, std::span<const WindowSample* const> samples,
                      MaskSource masks) {
  if (samples.empty()) throw ArgumentError("predict_probs: no samples");
  Tensor2 out(samples.size(), params.config.classes);
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, samples.size() - start);
    const ForwardResult fwd = forward(params, samples.subspan(start, n), masks);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < out.cols(); ++c) out(start + i, c) = fwd.probs(i, c);
  }
  return out;
}

double dataset_loss(const ModelParams& params, std::span<const WindowSample* const> samples,
                    const LossConfig& loss, MaskSource masks) {
  const Tensor2 probs = predict_probs(params, samples, masks);
  return combined_loss(labels_of(samples), probs, loss).loss;
}

EvalResult evaluate_model(const ModelParams& params, std::span<const WindowSample> samples,
                          MaskSource masks, AbsentClassPolicy policy) {
  const std::vector<const WindowSample*> ptrs = trainable(samples, false);
  const Tensor2 probs = predict_probs(params, ptrs, masks);
  const std::vector<int> preds = argmax_rows(probs);
  return evaluate(preds, labels_of(ptrs), params.config.classes, policy);
}

FinetuneResult finetune(const ModelParams& global, std::span<const WindowSample> data,
                        std::size_t rounds, const LocalTrainConfig& config, std::uint64_t seed,
                        const FinetuneCallback& on_round) {
  if (data.empty()) throw ArgumentError("finetune: empty fine-tune data");
  const std::vector<const WindowSample*> samples = trainable(data, config.train_mask);
  if (samples.empty()) throw ArgumentError("finetune: every fine-tune window is fully masked");

  LossConfig loss;
  loss.beta = config.beta;
  loss.mode = config.loss_mode;
  loss.class_counts = class_histogram(data, static_cast<int>(global.config.classes));

  FinetuneResult result{global, {}};
  OptimState state;
  state.config = config.optimizer;
  Rng rng(derive_seed(seed, "finetune"));
  const MaskSource masks = train_masks(config);
  result.round_loss.push_back(dataset_loss(result.params, samples, loss, masks));
  for (std::size_t r = 1; r <= rounds; ++r) {
    train_epoch(result.params, state, samples, loss, config, rng);
    result.round_loss.push_back(dataset_loss(result.params, samples, loss, masks));
    if (on_round) on_round(r, result.params);
  }
  return result;
}

}  // namespace owlfed
