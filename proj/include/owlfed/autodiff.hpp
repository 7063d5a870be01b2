// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "owlfed/tensor.hpp"

namespace owlfed {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kInvalid = std::numeric_limits<std::size_t>::max();
  std::size_t id = kInvalid;
  bool valid() const noexcept { return id != kInvalid; }
};

/// Reverse-mode gradient tape over Tensor2 values.
///
/// Every op appends one node holding its forward value and a closure that maps
/// the node's upstream gradient onto the gradients of its parents. backward()
/// walks the nodes once in reverse order of recording. A tape is single-use:
/// after backward() it refuses further recording or another backward pass.
class Tape {
 public:
  /// Accumulates d(out)/d(parent_i) * dout into dparents[i]. Entries of
  /// dparents are null for parents that do not require gradients.
  using BackwardFn =
      std::function<void(const Tensor2& dout, std::span<Tensor2* const> dparents)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  // Recorded closures refer back to the tape, so it stays put.
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var leaf(Tensor2 value, bool requires_grad = true);
  Var constant(Tensor2 value) { return leaf(std::move(value), false); }

  /// Extension point for ops defined outside this header (attention, pooling).
  Var record(Tensor2 value, std::vector<Var> parents, BackwardFn backward);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  /// x (R x C) + bias (1 x C) broadcast over rows.
  Var add_row(Var x, Var bias);
  Var scale(Var x, double factor);
  Var relu(Var x);
  Var sigmoid(Var x);
  Var softmax_rows(Var x);
  Var layer_norm(Var x, Var gain, Var bias, double eps = kLayerNormEps);
  /// Sum of all entries as a 1 x 1 tensor.
  Var sum(Var x);

  const Tensor2& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient accumulated at v; exactly zero when nothing flowed into it.
  Tensor2 grad(Var v) const;

  /// Adds g to the upstream gradient of v.
  void seed(Var v, const Tensor2& g);
  /// Runs all recorded backward closures in reverse order. Returns the number
  /// of op nodes visited. A tape with no recorded ops is a no-op.
  std::size_t backward();

  std::size_t size() const noexcept { return nodes_.size(); }
  bool spent() const noexcept { return spent_; }

 private:
  struct Node {
    Tensor2 value;
    std::optional<Tensor2> grad;
    std::vector<Var> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;
  Node& node(Var v);
  void ensure_open() const;

  std::vector<Node> nodes_;
  bool spent_ = false;
};

}  // namespace owlfed
