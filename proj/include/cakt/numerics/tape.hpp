// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cakt/numerics/parameter.hpp"
#include "cakt/numerics/tensor.hpp"

namespace cakt {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation record.
///
/// Ops append nodes in construction order; backward() replays their adjoint
/// functions in exactly the reverse order. A tape can be differentiated
/// once; reset() clears it for reuse. Nodes whose inputs all lack
/// requires_grad are recorded without an adjoint and skipped.
class Tape {
 public:
  /// Receives d(loss)/d(output) and accumulates into input gradients via
  /// Tape::accumulate.
  using Adjoint = std::function<void(Tape& tape, const Tensor& out_grad)>;

  Tape() = default;
  /// With grad disabled every leaf is recorded as a constant, so no
  /// adjoints are built (evaluation and decoding).
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Free differentiable input not backed by a Parameter (tests, oracles).
  Var variable(Tensor value);
  /// Leaf bound to a Parameter; differentiable unless the parameter is frozen.
  Var leaf(Parameter& param);

  Var record(Tensor value, const std::vector<Var>& inputs, Adjoint adjoint);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Adds g into the gradient of node id (no-op for nodes without grad).
  void accumulate(std::size_t id, const Tensor& g);
  Tensor& grad_buffer(std::size_t id);

  void backward(Var loss);
  /// Gradient of a node after backward(); zeros if nothing flowed into it.
  Tensor grad(Var v) const;

  void reset();
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Smallest |pre-activation| seen by any ReLU on this tape. Used to keep
  /// finite-difference probes away from the kink.
  double min_relu_gap() const { return min_relu_gap_; }
  void note_relu_gap(double gap);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    std::vector<std::size_t> inputs;
    Adjoint adjoint;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool consumed_ = false;
  bool grad_enabled_ = true;
  double min_relu_gap_ = std::numeric_limits<double>::infinity();
};

}  // namespace cakt
