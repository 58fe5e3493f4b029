#include "mlvae/tape.hpp"

#include <algorithm>
#include <string>

namespace mlvae {

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("value() on an unbound Var");
  return tape_->value(*this);
}

void Tape::check_owned(Var v, const char* what) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw std::logic_error(std::string(what) + ": Var does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  value.require_finite("constant");
  element_count(value.shape());
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, false});
  swept_ = false;
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  value.require_finite("variable");
  element_count(value.shape());
  nodes_.push_back(Node{"variable", std::move(value), {}, {}, {}, true});
  swept_ = false;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  value.require_finite(op);
  Node node;
  node.op = op;
  node.value = std::move(value);
  for (const Var& p : parents) {
    check_owned(p, op);
    node.parents.push_back(p.id());
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  swept_ = false;
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var output) {
  check_owned(output, "backward");
  if (nodes_[output.id()].value.size() != 1) {
    throw ShapeError("backward without an output gradient needs a one-element objective, got " +
                     shape_to_string(nodes_[output.id()].value.shape()));
  }
  backward(output, Tensor(nodes_[output.id()].value.shape(), 1.0));
}

void Tape::backward(Var output, const Tensor& output_gradient) {
  if (nodes_.empty()) throw std::logic_error("backward called on an empty tape");
  check_owned(output, "backward");
  Node& out = nodes_[output.id()];
  if (output_gradient.shape() != out.value.shape()) {
    throw ShapeError("output gradient shape " + shape_to_string(output_gradient.shape()) +
                     " does not match output " + shape_to_string(out.value.shape()));
  }
  output_gradient.require_finite("output gradient");

  for (auto& node : nodes_) {
    if (node.requires_grad) {
      node.grad = Tensor::zeros_like(node.value);
    } else {
      node.grad = Tensor();
    }
  }
  if (out.requires_grad) out.grad = output_gradient;

  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward) continue;
    node.backward(*this, i);
  }
  swept_ = true;
}

Tensor* Tape::grad_sink(Var parent) {
  Node& node = nodes_[parent.id()];
  return node.requires_grad ? &node.grad : nullptr;
}

const Tensor& Tape::gradient(Var v) const {
  check_owned(v, "gradient");
  if (!swept_) throw std::logic_error("gradient requested before backward");
  const Node& node = nodes_[v.id()];
  if (!node.requires_grad) throw std::logic_error("gradient requested for a constant");
  return node.grad;
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id()].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id()].requires_grad;
}

void Tape::clear() {
  nodes_.clear();
  swept_ = false;
}

}  // namespace mlvae
