// SPDX-License-Identifier: Apache-2.0
#include "owlfed/autodiff.hpp"

#include <cmath>

#include "owlfed/errors.hpp"

namespace owlfed {

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw ArgumentError("Tape: unknown variable");
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= nodes_.size()) throw ArgumentError("Tape: unknown variable");
  return nodes_[v.id];
}

void Tape::ensure_open() const {
  if (spent_) throw StateError("Tape: already consumed by backward()");
}

Var Tape::leaf(Tensor2 value, bool requires_grad) {
  ensure_open();
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor2 value, std::vector<Var> parents, BackwardFn backward) {
  ensure_open();
  bool any = false;
  for (Var p : parents) any = any || node(p).requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = any;
  n.parents = std::move(parents);
  if (any) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor2& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor2 Tape::grad(Var v) const {
  const auto& n = node(v);
  return n.grad ? *n.grad : Tensor2::zeros_like(n.value);
}

void Tape::seed(Var v, const Tensor2& g) {
  ensure_open();
  auto& n = node(v);
  if (!g.same_shape(n.value)) {
    throw DimensionError("Tape::seed: gradient " + g.shape_string() + " for value " +
                         n.value.shape_string());
  }
  if (!n.grad) n.grad = Tensor2::zeros_like(n.value);
  for (std::size_t i = 0; i < g.size(); ++i) (*n.grad)[i] += g[i];
}

std::size_t Tape::backward() {
  ensure_open();
  spent_ = true;
  std::size_t visited = 0;
  std::vector<Tensor2*> dparents;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].parents.empty()) continue;
    ++visited;
    Node& n = nodes_[i];
    if (!n.backward || !n.grad) continue;
    dparents.clear();
    for (Var p : n.parents) {
      Node& pn = nodes_[p.id];
      if (pn.requires_grad) {
        if (!pn.grad) pn.grad = Tensor2::zeros_like(pn.value);
        dparents.push_back(&*pn.grad);
      } else {
        dparents.push_back(nullptr);
      }
    }
    n.backward(*n.grad, dparents);
  }
  return visited;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor2& av = value(a);
  const Tensor2& bv = value(b);
  Tensor2 out = owlfed::matmul(av, bv);
  return record(std::move(out), {a, b},
                [this, a, b](const Tensor2& dout, std::span<Tensor2* const> d) {
                  if (d[0]) matmul_nt_acc(dout, value(b), *d[0]);
                  if (d[1]) matmul_tn_acc(value(a), dout, *d[1]);
                });
}

Var Tape::add(Var a, Var b) {
  const Tensor2& av = value(a);
  const Tensor2& bv = value(b);
  if (!av.same_shape(bv)) {
    throw DimensionError("add: shape " + av.shape_string() + " vs " + bv.shape_string());
  }
  Tensor2 out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return record(std::move(out), {a, b}, [](const Tensor2& dout, std::span<Tensor2* const> d) {
    for (auto* g : d)
      if (g)
        for (std::size_t i = 0; i < dout.size(); ++i) (*g)[i] += dout[i];
  });
}

Var Tape::add_row(Var x, Var bias) {
  const Tensor2& xv = value(x);
  const Tensor2& bv = value(bias);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_row: bias " + bv.shape_string() + " for input " +
                         xv.shape_string());
  }
  Tensor2 out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv[c];
  return record(std::move(out), {x, bias},
                [](const Tensor2& dout, std::span<Tensor2* const> d) {
                  if (d[0])
                    for (std::size_t i = 0; i < dout.size(); ++i) (*d[0])[i] += dout[i];
                  if (d[1])
                    for (std::size_t r = 0; r < dout.rows(); ++r)
                      for (std::size_t c = 0; c < dout.cols(); ++c) (*d[1])[c] += dout(r, c);
                });
}

Var Tape::scale(Var x, double factor) {
  Tensor2 out = value(x);
  for (double& v : out.values()) v *= factor;
  return record(std::move(out), {x},
                [factor](const Tensor2& dout, std::span<Tensor2* const> d) {
                  if (d[0])
                    for (std::size_t i = 0; i < dout.size(); ++i) (*d[0])[i] += factor * dout[i];
                });
}

Var Tape::relu(Var x) {
  Tensor2 out = owlfed::relu(value(x));
  return record(std::move(out), {x}, [this, x](const Tensor2& dout, std::span<Tensor2* const> d) {
    if (!d[0]) return;
    const Tensor2& in = value(x);
    // Subgradient at exactly 0 is 0.
    for (std::size_t i = 0; i < dout.size(); ++i)
      if (in[i] > 0.0) (*d[0])[i] += dout[i];
  });
}

Var Tape::sigmoid(Var x) {
  Tensor2 out = value(x);
  for (double& v : out.values()) v = owlfed::sigmoid(v);
  Var result = record(std::move(out), {x}, {});
  if (requires_grad(result)) {
    nodes_[result.id].backward = [this, result](const Tensor2& dout,
                                                std::span<Tensor2* const> d) {
      const Tensor2& s = value(result);
      for (std::size_t i = 0; i < dout.size(); ++i) (*d[0])[i] += dout[i] * s[i] * (1.0 - s[i]);
    };
  }
  return result;
}

Var Tape::softmax_rows(Var x) {
  Var result = record(owlfed::softmax_rows(value(x)), {x}, {});
  if (requires_grad(result)) {
    nodes_[result.id].backward = [this, result](const Tensor2& dout,
                                                std::span<Tensor2* const> d) {
      const Tensor2 dx = softmax_rows_backward(value(result), dout);
      for (std::size_t i = 0; i < dx.size(); ++i) (*d[0])[i] += dx[i];
    };
  }
  return result;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor2& xv = value(x);
  const Tensor2& gv = value(gain);
  const Tensor2& bv = value(bias);
  if (gv.size() != xv.cols() || bv.size() != xv.cols()) {
    throw DimensionError("layer_norm: gain " + gv.shape_string() + " / bias " +
                         bv.shape_string() + " for input " + xv.shape_string());
  }
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor2 xhat(rows, cols);
  std::vector<double> inv_std(rows);
  Tensor2 out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (in[c] - mean) * inv_std[r];
      out(r, c) = gv[c] * xhat(r, c) + bv[c];
    }
  }
  return record(
      std::move(out), {x, gain, bias},
      [this, gain, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          const Tensor2& dout, std::span<Tensor2* const> d) {
        const Tensor2& gv = value(gain);
        const std::size_t rows = dout.rows(), cols = dout.cols();
        const double n = static_cast<double>(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          if (d[1] || d[2]) {
            for (std::size_t c = 0; c < cols; ++c) {
              if (d[1]) (*d[1])[c] += dout(r, c) * xhat(r, c);
              if (d[2]) (*d[2])[c] += dout(r, c);
            }
          }
          if (!d[0]) continue;
          double mean_g = 0.0, mean_gx = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            const double g = dout(r, c) * gv[c];
            mean_g += g;
            mean_gx += g * xhat(r, c);
          }
          mean_g /= n;
          mean_gx /= n;
          for (std::size_t c = 0; c < cols; ++c) {
            const double g = dout(r, c) * gv[c];
            (*d[0])(r, c) += inv_std[r] * (g - mean_g - xhat(r, c) * mean_gx);
          }
        }
      });
}

Var Tape::sum(Var x) {
  double total = 0.0;
  for (double v : value(x).values()) total += v;
  return record(Tensor2(1, 1, total), {x}, [](const Tensor2& dout, std::span<Tensor2* const> d) {
    if (!d[0]) return;
    for (double& g : d[0]->values()) g += dout[0];
  });
}

}  // namespace owlfed
