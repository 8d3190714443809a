#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sliceroute::num {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// One vertex of the computation graph. Results of differentiable operations
// keep references to their operands and a rule that pushes this node's grad
// into theirs. Leaves (parameters, constants) have no operands.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> operands;
  std::function<void(Node&)> propagate;

  bool is_leaf() const { return operands.empty(); }
};

// Dense row-major float64 array with an attached gradient buffer. Copies are
// shallow: two Tensor handles may refer to the same node, like parameters
// shared between a model and its optimizer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->values.size(); }

  std::span<const double> values() const { return node_->values; }
  // Empty for tensors that do not require a gradient. Intermediate results get
  // their buffer on the first backward pass through them.
  std::span<double> mutable_values() { return node_->values; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad; }

  double item() const;
  double at(std::size_t i) const { return node_->values.at(i); }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  void zero_grad();

  // Reverse-mode sweep from this scalar. Leaf grads accumulate across calls;
  // intermediate grads are recomputed from scratch on every call.
  void backward() const;

  // Value copy with no history; the result is a leaf.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared_node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// The ordered list of recorded operations reachable from a root, operands
// before results. Replaying `propagate` in reverse order is backpropagation.
class ComputationRecord {
 public:
  static ComputationRecord trace(const Tensor& root);

  std::span<Node* const> order() const { return order_; }
  void run_backward(Node& root) const;

 private:
  std::vector<Node*> order_;
};

// Builds the result node of an operation. `propagate` is attached only when
// at least one operand requires a gradient; otherwise the result is a
// constant leaf and the operands are not retained.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::initializer_list<Tensor> operands, std::function<void(Node&)> propagate);
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   const std::vector<Tensor>& operands, std::function<void(Node&)> propagate);

}  // namespace sliceroute::num
