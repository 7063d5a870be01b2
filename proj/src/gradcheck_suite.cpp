// SPDX-License-Identifier: Apache-2.0
#include "owlfed/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "owlfed/autodiff.hpp"
#include "owlfed/errors.hpp"
#include "owlfed/gradcheck.hpp"
#include "owlfed/loss.hpp"
#include "owlfed/model.hpp"
#include "owlfed/rng.hpp"

namespace owlfed {

namespace {

using Shape = std::pair<std::size_t, std::size_t>;
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;
using Sampler = std::function<double(Rng&)>;

// One differentiable function together with how to draw its inputs.
struct Check {
  std::string name;
  std::function<GradCheckResult(Rng&, bool corrupt)> draw;
};

double normal(Rng& rng) { return standard_normal(rng); }

// With corrupt set, the first analytic gradient entry is pushed off by 1% of
// its scale, which any working comparison must flag.
GradCheckResult run_check(const ScalarFn& f, const GradientFn& g, std::span<const double> point,
                          bool corrupt) {
  if (!corrupt) return grad_check(f, g, point);
  const GradientFn bad = [&](std::span<const double> x) {
    std::vector<double> v = g(x);
    v[0] += 1e-2 * std::max(1.0, std::abs(v[0]));
    return v;
  };
  return grad_check(f, bad, point);
}

// Keeps relu probes away from the kink so finite differences stay one-sided-free.
double away_from_zero(Rng& rng) {
  const double m = uniform(rng, 0.1, 1.0);
  return uniform01(rng) < 0.5 ? -m : m;
}

std::vector<Tensor2> unflatten(std::span<const double> flat, const std::vector<Shape>& shapes) {
  std::vector<Tensor2> out;
  std::size_t offset = 0;
  for (auto [r, c] : shapes) {
    Tensor2 t(r, c);
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), r * c, t.values().begin());
    offset += r * c;
    out.push_back(std::move(t));
  }
  return out;
}

// f(x) = sum(op(x) .* R) with a random projection R, checked over all inputs.
Check tape_check(std::string name, std::vector<Shape> shapes, Builder build, Sampler sample = normal) {
  auto draw = [shapes, build, sample](Rng& rng, bool corrupt) {
    std::size_t n = 0;
    for (auto [r, c] : shapes) n += r * c;
    std::vector<double> point(n);
    for (double& v : point) v = sample(rng);

    Tensor2 projection;
    {
      Tape probe;
      std::vector<Var> leaves;
      for (auto& t : unflatten(point, shapes)) leaves.push_back(probe.leaf(std::move(t)));
      const Tensor2& out = probe.value(build(probe, leaves));
      projection = Tensor2(out.rows(), out.cols());
      for (double& v : projection.values()) v = normal(rng);
    }

    const ScalarFn f = [&](std::span<const double> x) {
      Tape tape;
      std::vector<Var> leaves;
      for (auto& t : unflatten(x, shapes)) leaves.push_back(tape.leaf(std::move(t)));
      const Tensor2& out = tape.value(build(tape, leaves));
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * projection[i];
      return s;
    };
    const GradientFn g = [&](std::span<const double> x) {
      Tape tape;
      std::vector<Var> leaves;
      for (auto& t : unflatten(x, shapes)) leaves.push_back(tape.leaf(std::move(t)));
      tape.seed(build(tape, leaves), projection);
      tape.backward();
      std::vector<double> grad;
      for (Var v : leaves) {
        const Tensor2 gv = tape.grad(v);
        grad.insert(grad.end(), gv.values().begin(), gv.values().end());
      }
      return grad;
    };
    return run_check(f, g, point, corrupt);
  };
  return {std::move(name), draw};
}

std::vector<std::uint8_t> random_mask(Rng& rng, std::size_t windows, std::size_t k) {
  std::vector<std::uint8_t> mask(windows * k);
  for (std::size_t w = 0; w < windows; ++w) {
    for (std::size_t i = 0; i < k; ++i) mask[w * k + i] = uniform01(rng) < 0.3 ? 1 : 0;
    mask[w * k + uniform_index(rng, k)] = 0;  // at least one live key
  }
  return mask;
}

Check attention_check() {
  auto draw = [](Rng& rng, bool corrupt) {
    constexpr std::size_t kWindows = 2, kRows = 5, kWidth = 4, kHeads = 2;
    const std::vector<std::uint8_t> mask = random_mask(rng, kWindows, kRows);
    const std::vector<Shape> shapes(3, Shape{kWindows * kRows, kWidth});
    Check c = tape_check("masked_attention", shapes, [mask](Tape& t, const std::vector<Var>& in) {
      return record_masked_attention(t, in[0], in[1], in[2], mask, kRows, kHeads);
    });
    return c.draw(rng, corrupt);
  };
  return {"masked_attention", draw};
}

Check model_check() {
  auto draw = [](Rng& rng, bool corrupt) {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.ffn_width = 16;
    cfg.features = 3;
    cfg.window = 5;
    cfg.classes = 3;
    cfg.seed = rng();
    ModelParams params = init_model(cfg);
    // Non-trivial norm and bias parameters.
    for (Tensor2* t : params.tensors())
      for (double& v : t->values()) v += 0.1 * normal(rng);

    std::vector<WindowSample> batch(3);
    for (auto& s : batch) {
      s.matrix = Tensor2(cfg.features, cfg.window);
      for (double& v : s.matrix.values()) v = normal(rng);
      s.label = static_cast<int>(uniform_index(rng, cfg.classes));
      s.mask = random_mask(rng, 1, cfg.window);
    }
    Tensor2 projection(batch.size(), cfg.classes);
    for (double& v : projection.values()) v = normal(rng);

    const ScalarFn f = [&](std::span<const double> x) {
      ModelParams p = params;
      p.assign(x);
      const Tensor2 logits = forward(p, batch, MaskSource::kLabels).logits;
      double s = 0.0;
      for (std::size_t i = 0; i < logits.size(); ++i) s += logits[i] * projection[i];
      return s;
    };
    const GradientFn g = [&](std::span<const double> x) {
      ModelParams p = params;
      p.assign(x);
      ForwardResult fwd = forward(p, batch, MaskSource::kLabels);
      return backward(fwd.cache, projection).flatten();
    };
    return run_check(f, g, params.flatten(), corrupt);
  };
  return {"model_forward", draw};
}

// Loss as a function of the logits, through the softmax. For CB-F the soft
// F1 of the drawn point is held fixed, matching the detached training gradient.
Check loss_check(LossMode mode) {
  auto draw = [mode](Rng& rng, bool corrupt) {
    constexpr std::size_t kBatch = 6, kClasses = 4;
    std::vector<int> labels(kBatch);
    for (int& l : labels) l = static_cast<int>(uniform_index(rng, kClasses));
    LossConfig cfg;
    cfg.mode = mode;
    cfg.beta = uniform(rng, 0.9, 0.9999);
    cfg.class_counts.resize(kClasses);
    for (auto& s : cfg.class_counts) s = uniform_index(rng, 2000);
    std::vector<double> point(kBatch * kClasses);
    for (double& v : point) v = 1.5 * normal(rng);
    const Tensor2 z0(kBatch, kClasses, point);
    const std::vector<double> fg = soft_f1_per_class(one_hot(labels, kClasses), softmax_rows(z0));
    const std::optional<std::span<const double>> detached =
        mode == LossMode::kClassBalancedFLoss ? std::optional<std::span<const double>>(fg) : std::nullopt;

    const ScalarFn f = [&](std::span<const double> x) {
      const Tensor2 z(kBatch, kClasses, std::vector<double>(x.begin(), x.end()));
      return combined_loss(labels, softmax_rows(z), cfg, detached).loss;
    };
    const GradientFn g = [&](std::span<const double> x) {
      const Tensor2 z(kBatch, kClasses, std::vector<double>(x.begin(), x.end()));
      const Tensor2 p = softmax_rows(z);
      const LossComponents lc = combined_loss(labels, p, cfg, detached);
      const Tensor2 dz = softmax_rows_backward(p, lc.grad);
      return std::vector<double>(dz.values().begin(), dz.values().end());
    };
    return run_check(f, g, point, corrupt);
  };
  return {"loss_" + std::string(to_string(mode)), draw};
}

std::vector<Check> all_checks() {
  std::vector<Check> checks;
  checks.push_back(tape_check("matmul", {{3, 4}, {4, 2}},
                              [](Tape& t, const std::vector<Var>& in) { return t.matmul(in[0], in[1]); }));
  checks.push_back(tape_check("add", {{3, 4}, {3, 4}},
                              [](Tape& t, const std::vector<Var>& in) { return t.add(in[0], in[1]); }));
  checks.push_back(tape_check("add_row", {{3, 4}, {1, 4}},
                              [](Tape& t, const std::vector<Var>& in) { return t.add_row(in[0], in[1]); }));
  checks.push_back(tape_check("scale", {{3, 4}},
                              [](Tape& t, const std::vector<Var>& in) { return t.scale(in[0], -0.7); }));
  checks.push_back(tape_check(
      "relu", {{3, 4}}, [](Tape& t, const std::vector<Var>& in) { return t.relu(in[0]); }, away_from_zero));
  checks.push_back(tape_check("sigmoid", {{3, 4}},
                              [](Tape& t, const std::vector<Var>& in) { return t.sigmoid(in[0]); }));
  checks.push_back(tape_check("softmax_rows", {{3, 5}},
                              [](Tape& t, const std::vector<Var>& in) { return t.softmax_rows(in[0]); }));
  checks.push_back(tape_check("layer_norm", {{3, 6}, {1, 6}, {1, 6}}, [](Tape& t, const std::vector<Var>& in) {
    return t.layer_norm(in[0], in[1], in[2]);
  }));
  checks.push_back(tape_check("sum", {{3, 4}}, [](Tape& t, const std::vector<Var>& in) { return t.sum(in[0]); }));
  checks.push_back(attention_check());
  checks.push_back(tape_check("mean_pool", {{6, 4}},
                              [](Tape& t, const std::vector<Var>& in) { return record_mean_pool(t, in[0], 3); }));
  checks.push_back(model_check());
  checks.push_back(loss_check(LossMode::kCrossEntropy));
  checks.push_back(loss_check(LossMode::kClassBalancedCrossEntropy));
  checks.push_back(loss_check(LossMode::kClassBalancedFLoss));
  return checks;
}

}  // namespace

std::vector<std::string> gradcheck_names() {
  std::vector<std::string> names;
  for (const auto& c : all_checks()) names.push_back(c.name);
  return names;
}

std::vector<GradcheckLine> run_gradcheck_suite(const GradcheckOptions& options) {
  if (options.draws == 0) throw ArgumentError("gradcheck: draws must be positive");
  const auto checks = all_checks();
  if (!options.corrupt.empty() &&
      std::none_of(checks.begin(), checks.end(), [&](const Check& c) { return c.name == options.corrupt; }))
    throw ArgumentError("gradcheck: no check named '" + options.corrupt + "'");

  std::vector<GradcheckLine> lines;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(i)));
    GradcheckLine line{checks[i].name, options.draws, 0.0, true};
    const bool corrupt = checks[i].name == options.corrupt;
    for (std::size_t d = 0; d < options.draws; ++d)
      line.max_relative_error = std::max(line.max_relative_error, checks[i].draw(rng, corrupt).max_relative_error);
    line.passed = line.max_relative_error <= options.tolerance;
    lines.push_back(line);
  }
  return lines;
}

}  // namespace owlfed
