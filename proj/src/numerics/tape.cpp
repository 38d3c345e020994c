// SPDX-License-Identifier: Apache-2.0
#include "cakt/numerics/tape.hpp"

#include <algorithm>

#include "cakt/error.hpp"

namespace cakt {

Parameter::Parameter(std::string name, Tensor value, bool frozen)
    : name_(std::move(name)), value_(std::move(value)), frozen_(frozen) {
  grad_ = Tensor(value_.shape(), 0.0);
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->size();
  return n;
}

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::push(Node node) {
  if (!node.value.all_finite()) {
    throw NumericError("non-finite value produced on tape (node " + std::to_string(nodes_.size()) +
                       ", shape " + shape_string(node.value.shape()) + ")");
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::leaf(Parameter& param) {
  Node n;
  n.value = param.value();
  n.requires_grad = grad_enabled_ && !param.frozen();
  n.param = &param;
  return push(std::move(n));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, Adjoint adjoint) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (&in.tape() != this) throw Error("op mixes vars from different tapes");
    n.inputs.push_back(in.id());
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.adjoint = std::move(adjoint);
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  auto& node = nodes_[id];
  if (!node.requires_grad) return;
  if (g.size() != node.value.size()) {
    throw ShapeError("gradient of size " + std::to_string(g.size()) + " for node of shape " +
                     shape_string(node.value.shape()));
  }
  auto& buf = grad_buffer(id);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

void Tape::backward(Var loss) {
  if (consumed_) throw Error("backward called twice on the same tape without reset");
  if (&loss.tape() != this) throw Error("loss does not belong to this tape");
  if (loss.value().size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  }
  consumed_ = true;
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id()).fill(1.0);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || node.grad.empty()) continue;
    if (node.adjoint) node.adjoint(*this, node.grad);
    if (node.param != nullptr && !node.param->frozen()) {
      auto& pg = node.param->mutable_grad();
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += node.grad[k];
    }
  }
}

Tensor Tape::grad(Var v) const {
  const auto& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
  min_relu_gap_ = std::numeric_limits<double>::infinity();
}

void Tape::note_relu_gap(double gap) { min_relu_gap_ = std::min(min_relu_gap_, gap); }

}  // namespace cakt
