#include "thermocast/tape.hpp"

#include <utility>

#include "thermocast/errors.hpp"

namespace thermocast {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->nodes_[id_].value;
}

bool Var::requires_grad() const { return tape_ && tape_->nodes_[id_].requires_grad; }

Tensor Gradients::of(const Var& v) const {
  if (v.id() >= grads_.size()) return Tensor(v.shape());
  if (grads_[v.id()]) return *grads_[v.id()];
  return Tensor(shapes_[v.id()]);
}

bool Gradients::reached(const Var& v) const { return v.id() < grads_.size() && grads_[v.id()].has_value(); }

Var GradTape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var GradTape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var GradTape::record(Tensor value, std::vector<Var> inputs, BackwardRule rule) {
  Node node{std::move(value), {}, {}, false};
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (&in.tape() != this) throw ContractError("operation mixes values from different tapes");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients GradTape::backward(const Var& loss) const {
  if (&loss.tape() != this) throw ContractError("loss belongs to another tape");
  if (loss.value().numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  Gradients out;
  const std::size_t count = loss.id() + 1;
  out.grads_.resize(nodes_.size());
  out.shapes_.reserve(nodes_.size());
  for (const Node& n : nodes_) out.shapes_.push_back(n.value.shape());

  out.grads_[loss.id()] = Tensor(loss.shape(), 1.0);
  std::vector<Tensor*> grad_in;
  for (std::size_t i = count; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!out.grads_[i] || !node.rule) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const std::size_t in = node.inputs[j];
      if (!nodes_[in].requires_grad) continue;
      if (!out.grads_[in]) out.grads_[in] = Tensor(nodes_[in].value.shape());
      grad_in[j] = &*out.grads_[in];
    }
    node.rule(node.value, *out.grads_[i], grad_in);
    // Interior gradients are no longer needed once propagated.
    if (!node.inputs.empty()) out.grads_[i].reset();
  }
  return out;
}

}  // namespace thermocast
