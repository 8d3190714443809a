#include "sliceroute/numerics/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "sliceroute/errors.hpp"

namespace sliceroute::num {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  if (requires_grad) node->grad.assign(values.size(), 0.0);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return node_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  if (rank() != 2) throw DimensionError("at(r, c) on tensor of shape " + shape_string(shape()));
  return node_->values.at(r * node_->shape[1] + c);
}

void Tensor::set_requires_grad(bool flag) {
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be changed on leaf tensors");
  node_->requires_grad = flag;
  if (flag && node_->grad.size() != node_->values.size()) node_->grad.assign(node_->values.size(), 0.0);
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

void Tensor::backward() const {
  if (!defined() || size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (defined() ? shape_string(shape()) : std::string("<undefined>")));
  }
  if (!node_->requires_grad) return;
  ComputationRecord::trace(*this).run_backward(*node_);
}

Tensor Tensor::detach() const { return from(shape(), node_->values, false); }

ComputationRecord ComputationRecord::trace(const Tensor& root) {
  ComputationRecord record;
  if (!root.defined() || !root.requires_grad()) return record;
  // Iterative post-order DFS; graphs from unrolled recurrences are deep.
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->operands.size()) {
      Node* child = node->operands[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      record.order_.push_back(node);
      stack.pop_back();
    }
  }
  return record;
}

void ComputationRecord::run_backward(Node& root) const {
  for (Node* n : order_) {
    // Intermediate buffers are allocated here rather than at construction, so
    // forward-only passes never pay for them.
    if (!n->is_leaf() || n->grad.size() != n->values.size()) n->grad.assign(n->values.size(), 0.0);
  }
  if (root.is_leaf()) {
    root.grad[0] += 1.0;
  } else {
    root.grad[0] = 1.0;
  }
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    Node* n = *it;
    if (n->propagate) n->propagate(*n);
  }
}

namespace {

template <typename Range>
Tensor make_result_impl(const char* op, Shape shape, std::vector<double> values, const Range& operands,
                        std::function<void(Node&)> propagate) {
  Tensor out = Tensor::from(std::move(shape), std::move(values), false);
  bool any = std::any_of(operands.begin(), operands.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    Node* node = out.node();
    node->requires_grad = true;
    node->op = op;
    for (const auto& t : operands) node->operands.push_back(t.shared_node());
    node->propagate = std::move(propagate);
  }
  return out;
}

}  // namespace

Tensor make_result(const char* op, Shape shape, std::vector<double> values, std::initializer_list<Tensor> operands,
                   std::function<void(Node&)> propagate) {
  return make_result_impl(op, std::move(shape), std::move(values), operands, std::move(propagate));
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values, const std::vector<Tensor>& operands,
                   std::function<void(Node&)> propagate) {
  return make_result_impl(op, std::move(shape), std::move(values), operands, std::move(propagate));
}

}  // namespace sliceroute::num
