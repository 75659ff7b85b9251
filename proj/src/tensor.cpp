#include "onetracker/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace onetracker {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<TensorNode>()) {
  for (int64_t d : shape) {
    if (d <= 0) throw ValidationError("tensor: non-positive extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ValidationError("tensor: shape " + shape_str(shape) + " does not match buffer length " +
                          std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(data);
}

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), 0.0);
  return Tensor(std::move(shape), std::move(d));
}

Tensor Tensor::full(Shape shape, double v) {
  std::vector<double> d(static_cast<size_t>(shape_numel(shape)), v);
  return Tensor(std::move(shape), std::move(d));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ValidationError("item: tensor has " + std::to_string(numel()) + " elements, expected 1");
  }
  return node_->value[0];
}

Tensor& Tensor::set_requires_grad(bool b) {
  node_->requires_grad = b;
  return *this;
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw std::runtime_error("grad: no gradient recorded for this tensor");
  return node_->grad;
}

std::span<double> Tensor::grad_mut() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detached_copy() const {
  return Tensor(node_->shape, node_->value);
}

void backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw ValidationError("backward: root must be a scalar tensor, got shape " +
                          (root.defined() ? shape_str(root.shape()) : std::string("<empty>")));
  }
  // Iterative post-order over the recorded graph.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* n;
    size_t next;
  };
  std::vector<Frame> stack;
  if (root.node()->requires_grad) {
    stack.push_back({root.node(), 0});
    seen.insert(root.node());
  }
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  root.node()->ensure_grad();
  root.node()->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop();
    }
  }
  // Free the graph; leaves keep their accumulated gradients.
  for (TensorNode* n : order) {
    n->backprop = nullptr;
    n->parents.clear();
  }
}

}  // namespace onetracker
