// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "json.hpp"
#include "owlfed/autodiff.hpp"
#include "owlfed/data.hpp"
#include "owlfed/tensor.hpp"

namespace owlfed {

struct ModelConfig {
  std::size_t layers = 5;
  std::size_t width = 32;
  std::size_t heads = 1;
  std::size_t ffn_width = 64;
  std::size_t features = 5;  ///< d
  std::size_t window = kDefaultWindow;  ///< k
  std::size_t classes = kDefaultClassCount;
  std::uint64_t seed = 0;

  /// Throws ArgumentError on zero sizes, width % heads != 0, layers < 1 or classes < 2.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct EncoderLayerParams {
  Tensor2 wq, wk, wv, wo;          ///< width x width
  Tensor2 norm1_gain, norm1_bias;  ///< 1 x width
  Tensor2 ffn_w1, ffn_b1;          ///< width x ffn, 1 x ffn
  Tensor2 ffn_w2, ffn_b2;          ///< ffn x width, 1 x width
  Tensor2 norm2_gain, norm2_bias;  ///< 1 x width

  friend bool operator==(const EncoderLayerParams&, const EncoderLayerParams&) = default;
};

/// Complete parameter set: per-position input projection (d -> width),
/// N encoder layers and the classifier head (width -> C). Gradients use the
/// same type.
struct ModelParams {
  ModelConfig config;
  Tensor2 input_w, input_b;
  std::vector<EncoderLayerParams> layers;
  Tensor2 head_w, head_b;

  /// All tensors in canonical order (input, layers in order, head). The order
  /// defines the checkpoint payload and the optimizer state layout.
  std::vector<Tensor2*> tensors();
  std::vector<const Tensor2*> tensors() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Same config and same tensor shapes.
  bool congruent(const ModelParams& other) const;

  /// Flattened values in canonical order, and the inverse.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);

  /// Zero tensors shaped like a model of this config.
  static ModelParams zeros(const ModelConfig& config);

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Uniform init in +/- sqrt(6 / (fan_in + fan_out)) for weight matrices;
/// biases 0, layer-norm gains 1. Deterministic in config.seed.
ModelParams init_model(const ModelConfig& config);

/// sqrt(6 / (fan_in + fan_out)).
double init_bound(std::size_t fan_in, std::size_t fan_out);

struct AttentionResult {
  Tensor2 output;
  Tensor2 weights;
};

/// Single-head scaled dot-product attention over one window:
/// weights = softmax(Q K^T / sqrt(d_k)) with masked key columns forced to
/// exactly 0, output = weights V. Throws DegenerateMaskError if every key is
/// masked and DimensionError on shape mismatch.
AttentionResult masked_attention(const Tensor2& q, const Tensor2& k, const Tensor2& v,
                                 std::span<const std::uint8_t> mask, std::size_t d_k);

/// Records multi-head masked attention for a batch of windows stacked along
/// rows (block_rows rows per window). masks has one entry per row. When
/// weights_out is given it receives the (batch*heads*block_rows) x block_rows
/// attention weights.
Var record_masked_attention(Tape& tape, Var q, Var k, Var v, std::span<const std::uint8_t> masks,
                            std::size_t block_rows, std::size_t heads,
                            Tensor2* weights_out = nullptr);

/// Records mean pooling of each block of block_rows rows into one row.
Var record_mean_pool(Tape& tape, Var x, std::size_t block_rows);

enum class MaskSource {
  kNone,      ///< no masking (default at inference)
  kLabels,    ///< label-derived masks (training)
  kExternal,  ///< externally supplied non-reservoir flag column
};

/// Everything backward() needs: the tape with parameter leaves and the
/// per-layer attention weights. Single use.
class ForwardCache {
 public:
  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache&&) noexcept;
  ForwardCache& operator=(ForwardCache&&) noexcept;

  /// Per layer: (batch * heads * k) x k attention weights.
  const std::vector<Tensor2>& attention_weights() const { return attention_; }
  /// Head pre-activation (logits), batch x C.
  const Tensor2& head_preactivation() const;
  const Mask& mask() const { return mask_; }
  bool consumed() const noexcept { return consumed_; }

 private:
  friend struct ForwardAccess;
  std::unique_ptr<Tape> tape_;
  ModelConfig config_;
  std::vector<Var> param_vars_;
  Var logits_;
  std::vector<Tensor2> attention_;
  Mask mask_;
  bool consumed_ = false;
};

struct ForwardResult {
  Tensor2 logits;
  Tensor2 probs;
  ForwardCache cache;
};

/// Batch forward pass. Throws ArgumentError for an empty batch, DimensionError
/// when a window does not match the config, DegenerateMaskError when a
/// window's mask covers every position.
ForwardResult forward(const ModelParams& params, std::span<const WindowSample> batch,
                      MaskSource masks = MaskSource::kNone);
/// Same, over pointers into a larger sample set.
ForwardResult forward(const ModelParams& params, std::span<const WindowSample* const> batch,
                      MaskSource masks = MaskSource::kNone);

/// Gradients of sum(logits .* dlogits) for every parameter. Throws StateError
/// when the cache was already used.
ModelParams backward(ForwardCache& cache, const Tensor2& dlogits);

/// argmax of probs per row; ties go to the smaller class id.
std::vector<int> argmax_rows(const Tensor2& probs);
std::vector<int> predict(const ModelParams& params, std::span<const WindowSample> batch,
                         MaskSource masks = MaskSource::kNone);

}  // namespace owlfed
