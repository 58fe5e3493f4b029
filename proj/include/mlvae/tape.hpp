#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <vector>

#include "mlvae/tensor.hpp"

namespace mlvae {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
// owning tape is alive and has not been cleared.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run reverse-mode tape. Every op appends one node holding its
// output value and a closure that pushes the node's output gradient into its
// parents. Nodes are appended in dependency order, so a reverse sweep visits
// each node after every node that consumed it.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t node)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);

  // Seeds a one-element output with gradient 1.
  void backward(Var output);
  void backward(Var output, const Tensor& output_gradient);

  // Gradient of the last backward sweep; zeros for variables it did not reach.
  const Tensor& gradient(Var v) const;
  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }
  bool has_gradients() const { return swept_; }
  void clear();

  // Op-author interface.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  const Tensor& node_value(std::size_t node) const { return nodes_[node].value; }
  const Tensor& node_gradient(std::size_t node) const { return nodes_[node].grad; }
  // Gradient accumulator for `parent`, or nullptr when it needs none.
  Tensor* grad_sink(Var parent);

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owned(Var v, const char* what) const;

  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace mlvae
