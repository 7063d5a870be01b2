// SPDX-License-Identifier: Apache-2.0
#include "owlfed/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "owlfed/errors.hpp"
#include "owlfed/rng.hpp"

namespace owlfed {

void ModelConfig::validate() const {
  if (layers < 1) throw ArgumentError("ModelConfig: layers must be >= 1");
  if (classes < 2) throw ArgumentError("ModelConfig: classes must be >= 2");
  if (width == 0 || heads == 0 || ffn_width == 0 || features == 0 || window == 0) {
    throw ArgumentError("ModelConfig: width, heads, ffn_width, features and window must be > 0");
  }
  if (width % heads != 0) {
    throw ArgumentError("ModelConfig: width " + std::to_string(width) +
                        " is not divisible by heads " + std::to_string(heads));
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"layers", c.layers},       {"width", c.width},   {"heads", c.heads},
                     {"ffn_width", c.ffn_width}, {"features", c.features}, {"window", c.window},
                     {"classes", c.classes},     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  c.layers = j.value("layers", c.layers);
  c.width = j.value("width", c.width);
  c.heads = j.value("heads", c.heads);
  c.ffn_width = j.value("ffn_width", c.ffn_width);
  c.features = j.value("features", c.features);
  c.window = j.value("window", c.window);
  c.classes = j.value("classes", c.classes);
  c.seed = j.value("seed", c.seed);
}

std::vector<Tensor2*> ModelParams::tensors() {
  std::vector<Tensor2*> out{&input_w, &input_b};
  for (auto& l : layers) {
    for (Tensor2* t : {&l.wq, &l.wk, &l.wv, &l.wo, &l.norm1_gain, &l.norm1_bias, &l.ffn_w1,
                       &l.ffn_b1, &l.ffn_w2, &l.ffn_b2, &l.norm2_gain, &l.norm2_bias})
      out.push_back(t);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

std::vector<const Tensor2*> ModelParams::tensors() const {
  auto mut = const_cast<ModelParams*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor2* t : tensors()) n += t->size();
  return n;
}

bool ModelParams::all_finite() const {
  const auto ts = tensors();
  return std::all_of(ts.begin(), ts.end(), [](const Tensor2* t) { return t->all_finite(); });
}

bool ModelParams::congruent(const ModelParams& other) const {
  if (!(config == other.config) || layers.size() != other.layers.size()) return false;
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!a[i]->same_shape(*b[i])) return false;
  return true;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Tensor2* t : tensors()) flat.insert(flat.end(), t->values().begin(), t->values().end());
  return flat;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw DimensionError("ModelParams::assign: " + std::to_string(flat.size()) +
                         " values for " + std::to_string(parameter_count()) + " parameters");
  }
  std::size_t offset = 0;
  for (Tensor2* t : tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t->size(), t->data());
    offset += t->size();
  }
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  ModelParams p;
  p.config = config;
  const std::size_t w = config.width, f = config.ffn_width;
  p.input_w = Tensor2(config.features, w);
  p.input_b = Tensor2(1, w);
  p.layers.resize(config.layers);
  for (auto& l : p.layers) {
    l.wq = Tensor2(w, w);
    l.wk = Tensor2(w, w);
    l.wv = Tensor2(w, w);
    l.wo = Tensor2(w, w);
    l.norm1_gain = Tensor2(1, w);
    l.norm1_bias = Tensor2(1, w);
    l.ffn_w1 = Tensor2(w, f);
    l.ffn_b1 = Tensor2(1, f);
    l.ffn_w2 = Tensor2(f, w);
    l.ffn_b2 = Tensor2(1, w);
    l.norm2_gain = Tensor2(1, w);
    l.norm2_bias = Tensor2(1, w);
  }
  p.head_w = Tensor2(w, config.classes);
  p.head_b = Tensor2(1, config.classes);
  return p;
}

double init_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

ModelParams init_model(const ModelConfig& config) {
  ModelParams p = ModelParams::zeros(config);
  Rng rng(derive_seed(config.seed, "init"));
  auto fill_uniform = [&rng](Tensor2& t) {
    const double b = init_bound(t.rows(), t.cols());
    for (double& v : t.values()) v = uniform(rng, -b, b);
  };
  fill_uniform(p.input_w);
  for (auto& l : p.layers) {
    for (Tensor2* t : {&l.wq, &l.wk, &l.wv, &l.wo, &l.ffn_w1, &l.ffn_w2}) fill_uniform(*t);
    l.norm1_gain.fill(1.0);
    l.norm2_gain.fill(1.0);
  }
  fill_uniform(p.head_w);
  return p;
}

namespace {

// Attention of rows [row0, row0 + n) onto the same row range. Q/K use columns
// [qk0, qk0 + dqk), V columns [v0, v0 + dv). weights is n x n, written fully.
void attend(const Tensor2& q, const Tensor2& k, const Tensor2& v, std::size_t row0, std::size_t n,
            std::size_t qk0, std::size_t dqk, std::size_t v0, std::size_t dv,
            const std::uint8_t* mask, double scale, double* weights, Tensor2& out,
            std::size_t out0) {
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = q.data() + (row0 + i) * q.cols() + qk0;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[j]) continue;
      const double* kj = k.data() + (row0 + j) * k.cols() + qk0;
      double s = 0.0;
      for (std::size_t c = 0; c < dqk; ++c) s += qi[c] * kj[c];
      scores[j] = s * scale;
      mx = std::max(mx, scores[j]);
    }
    double total = 0.0;
    double* wi = weights + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[j]) {
        wi[j] = 0.0;
        continue;
      }
      wi[j] = std::exp(scores[j] - mx);
      total += wi[j];
    }
    double* oi = out.data() + (row0 + i) * out.cols() + out0;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[j]) continue;
      wi[j] /= total;
      const double* vj = v.data() + (row0 + j) * v.cols() + v0;
      for (std::size_t c = 0; c < dv; ++c) oi[c] += wi[j] * vj[c];
    }
  }
}

void require_unmasked_key(const std::uint8_t* mask, std::size_t n, std::size_t block) {
  if (std::all_of(mask, mask + n, [](std::uint8_t m) { return m != 0; })) {
    throw DegenerateMaskError("masked attention: every key position of window " +
                              std::to_string(block) + " is masked");
  }
}

}  // namespace

AttentionResult masked_attention(const Tensor2& q, const Tensor2& k, const Tensor2& v,
                                 std::span<const std::uint8_t> mask, std::size_t d_k) {
  const std::size_t n = q.rows();
  if (k.rows() != n || v.rows() != n || q.cols() != k.cols()) {
    throw DimensionError("masked_attention: Q " + q.shape_string() + ", K " + k.shape_string() +
                         ", V " + v.shape_string());
  }
  if (mask.size() != n) {
    throw DimensionError("masked_attention: mask length " + std::to_string(mask.size()) +
                         " for " + std::to_string(n) + " positions");
  }
  if (d_k == 0) throw ArgumentError("masked_attention: d_k must be > 0");
  require_unmasked_key(mask.data(), n, 0);
  AttentionResult r{Tensor2(n, v.cols()), Tensor2(n, n)};
  attend(q, k, v, 0, n, 0, q.cols(), 0, v.cols(), mask.data(),
         1.0 / std::sqrt(static_cast<double>(d_k)), r.weights.data(), r.output, 0);
  return r;
}

Var record_masked_attention(Tape& tape, Var qv, Var kv, Var vv, std::span<const std::uint8_t> masks,
                            std::size_t block_rows, std::size_t heads, Tensor2* weights_out) {
  const Tensor2& q = tape.value(qv);
  const Tensor2& k = tape.value(kv);
  const Tensor2& v = tape.value(vv);
  if (!q.same_shape(k) || !q.same_shape(v)) {
    throw DimensionError("attention: Q " + q.shape_string() + ", K " + k.shape_string() +
                         ", V " + v.shape_string());
  }
  if (block_rows == 0 || q.rows() % block_rows != 0 || masks.size() != q.rows()) {
    throw DimensionError("attention: " + std::to_string(q.rows()) + " rows, block " +
                         std::to_string(block_rows) + ", mask length " +
                         std::to_string(masks.size()));
  }
  if (heads == 0 || q.cols() % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(q.cols()) +
                         " not divisible by heads " + std::to_string(heads));
  }
  const std::size_t n = block_rows;
  const std::size_t blocks = q.rows() / n;
  const std::size_t dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor2 weights(blocks * heads * n, n);
  Tensor2 out(q.rows(), q.cols());
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::uint8_t* m = masks.data() + b * n;
    require_unmasked_key(m, n, b);
    for (std::size_t h = 0; h < heads; ++h) {
      attend(q, k, v, b * n, n, h * dh, dh, h * dh, dh, m, scale,
             weights.data() + (b * heads + h) * n * n, out, h * dh);
    }
  }
  if (weights_out) *weights_out = weights;

  Mask mask_copy(masks.begin(), masks.end());
  return tape.record(
      std::move(out), {qv, kv, vv},
      [&tape, qv, kv, vv, weights = std::move(weights), mask_copy = std::move(mask_copy), n,
       blocks, heads, dh, scale](const Tensor2& dout, std::span<Tensor2* const> d) {
        const Tensor2& q = tape.value(qv);
        const Tensor2& k = tape.value(kv);
        const Tensor2& v = tape.value(vv);
        const std::size_t width = q.cols();
        std::vector<double> da(n), ds(n);
        for (std::size_t b = 0; b < blocks; ++b) {
          const std::uint8_t* m = mask_copy.data() + b * n;
          for (std::size_t h = 0; h < heads; ++h) {
            const double* w = weights.data() + (b * heads + h) * n * n;
            const std::size_t c0 = h * dh;
            for (std::size_t i = 0; i < n; ++i) {
              const std::size_t ri = b * n + i;
              const double* doi = dout.data() + ri * width + c0;
              const double* wi = w + i * n;
              double dot = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                if (m[j]) continue;
                const std::size_t rj = b * n + j;
                const double* vj = v.data() + rj * width + c0;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += doi[c] * vj[c];
                da[j] = s;
                dot += wi[j] * s;
                if (d[2]) {
                  double* dvj = d[2]->data() + rj * width + c0;
                  for (std::size_t c = 0; c < dh; ++c) dvj[c] += wi[j] * doi[c];
                }
              }
              for (std::size_t j = 0; j < n; ++j) ds[j] = m[j] ? 0.0 : wi[j] * (da[j] - dot) * scale;
              const double* qi = q.data() + ri * width + c0;
              for (std::size_t j = 0; j < n; ++j) {
                if (m[j]) continue;
                const std::size_t rj = b * n + j;
                if (d[0]) {
                  const double* kj = k.data() + rj * width + c0;
                  double* dqi = d[0]->data() + ri * width + c0;
                  for (std::size_t c = 0; c < dh; ++c) dqi[c] += ds[j] * kj[c];
                }
                if (d[1]) {
                  double* dkj = d[1]->data() + rj * width + c0;
                  for (std::size_t c = 0; c < dh; ++c) dkj[c] += ds[j] * qi[c];
                }
              }
            }
          }
        }
      });
}

Var record_mean_pool(Tape& tape, Var xv, std::size_t block_rows) {
  const Tensor2& x = tape.value(xv);
  if (block_rows == 0 || x.rows() % block_rows != 0) {
    throw DimensionError("mean_pool: " + std::to_string(x.rows()) + " rows in blocks of " +
                         std::to_string(block_rows));
  }
  const std::size_t blocks = x.rows() / block_rows;
  const double inv = 1.0 / static_cast<double>(block_rows);
  Tensor2 out(blocks, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out(r / block_rows, c) += x(r, c);
  for (double& v : out.values()) v *= inv;
  return tape.record(std::move(out), {xv},
                     [block_rows, inv](const Tensor2& dout, std::span<Tensor2* const> d) {
                       if (!d[0]) return;
                       Tensor2& g = *d[0];
                       for (std::size_t r = 0; r < g.rows(); ++r)
                         for (std::size_t c = 0; c < g.cols(); ++c)
                           g(r, c) += dout(r / block_rows, c) * inv;
                     });
}

ForwardCache::ForwardCache() = default;
ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache&&) noexcept = default;
ForwardCache& ForwardCache::operator=(ForwardCache&&) noexcept = default;

struct ForwardAccess {
  static ForwardResult run(const ModelParams& params,
                           std::span<const WindowSample* const> batch, MaskSource source) {
    const ModelConfig& cfg = params.config;
    if (batch.empty()) throw ArgumentError("forward: empty batch");
    const std::size_t k = cfg.window, d = cfg.features, B = batch.size();

    Tensor2 x(B * k, d);
    Mask masks(B * k, 0);
    for (std::size_t b = 0; b < B; ++b) {
      const WindowSample& s = *batch[b];
      if (s.matrix.rows() != d || s.matrix.cols() != k) {
        throw DimensionError("forward: window " + s.matrix.shape_string() + " but model expects " +
                             std::to_string(d) + "x" + std::to_string(k));
      }
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t f = 0; f < d; ++f) x(b * k + j, f) = s.matrix(f, j);
      const Mask* m = nullptr;
      if (source == MaskSource::kLabels) m = &s.mask;
      if (source == MaskSource::kExternal) {
        if (s.external_mask.empty())
          throw ArgumentError("forward: external mask requested but the window has none");
        m = &s.external_mask;
      }
      if (m) {
        if (m->size() != k) throw DimensionError("forward: mask length does not match window");
        std::copy(m->begin(), m->end(), masks.begin() + static_cast<std::ptrdiff_t>(b * k));
      }
    }

    ForwardResult result;
    ForwardCache& cache = result.cache;
    cache.tape_ = std::make_unique<Tape>();
    cache.config_ = cfg;
    Tape& tape = *cache.tape_;
    for (const Tensor2* t : params.tensors()) cache.param_vars_.push_back(tape.leaf(*t));
    const auto& pv = cache.param_vars_;

    std::size_t idx = 0;
    const Var in_w = pv[idx++], in_b = pv[idx++];
    Var h = tape.add_row(tape.matmul(tape.constant(std::move(x)), in_w), in_b);
    cache.attention_.resize(cfg.layers);
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const Var wq = pv[idx++], wk = pv[idx++], wv = pv[idx++], wo = pv[idx++];
      const Var g1 = pv[idx++], b1 = pv[idx++];
      const Var w1 = pv[idx++], fb1 = pv[idx++], w2 = pv[idx++], fb2 = pv[idx++];
      const Var g2 = pv[idx++], b2 = pv[idx++];
      const Var att = record_masked_attention(tape, tape.matmul(h, wq), tape.matmul(h, wk),
                                              tape.matmul(h, wv), masks, k, cfg.heads,
                                              &cache.attention_[l]);
      const Var h1 = tape.layer_norm(tape.add(h, tape.matmul(att, wo)), g1, b1);
      const Var hidden = tape.relu(tape.add_row(tape.matmul(h1, w1), fb1));
      const Var ffn = tape.add_row(tape.matmul(hidden, w2), fb2);
      h = tape.layer_norm(tape.add(h1, ffn), g2, b2);
    }
    const Var head_w = pv[idx++], head_b = pv[idx++];
    const Var pooled = record_mean_pool(tape, h, k);
    cache.logits_ = tape.add_row(tape.matmul(pooled, head_w), head_b);
    cache.mask_ = std::move(masks);

    result.logits = tape.value(cache.logits_);
    result.probs = softmax_rows(result.logits);
    return result;
  }

  static ModelParams backward(ForwardCache& cache, const Tensor2& dlogits) {
    if (cache.consumed_ || !cache.tape_) {
      throw StateError("backward: forward cache already consumed or never filled");
    }
    Tape& tape = *cache.tape_;
    if (!dlogits.same_shape(tape.value(cache.logits_))) {
      throw DimensionError("backward: dlogits " + dlogits.shape_string() + " for logits " +
                           tape.value(cache.logits_).shape_string());
    }
    cache.consumed_ = true;
    tape.seed(cache.logits_, dlogits);
    tape.backward();
    ModelParams grads = ModelParams::zeros(cache.config_);
    auto slots = grads.tensors();
    for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = tape.grad(cache.param_vars_[i]);
    return grads;
  }

  static const Tensor2& logits(const ForwardCache& cache) {
    if (!cache.tape_) throw StateError("ForwardCache: empty");
    return cache.tape_->value(cache.logits_);
  }
};

const Tensor2& ForwardCache::head_preactivation() const { return ForwardAccess::logits(*this); }

ForwardResult forward(const ModelParams& params, std::span<const WindowSample* const> batch,
                      MaskSource masks) {
  return ForwardAccess::run(params, batch, masks);
}

ForwardResult forward(const ModelParams& params, std::span<const WindowSample> batch,
                      MaskSource masks) {
  std::vector<const WindowSample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  return ForwardAccess::run(params, ptrs, masks);
}

ModelParams backward(ForwardCache& cache, const Tensor2& dlogits) {
  return ForwardAccess::backward(cache, dlogits);
}

std::vector<int> argmax_rows(const Tensor2& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    const auto row = probs.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const ModelParams& params, std::span<const WindowSample> batch,
                         MaskSource masks) {
  return argmax_rows(forward(params, batch, masks).probs);
}

}  // namespace owlfed
