#include "entdec/tensor.hpp"

#include <algorithm>
#include <unordered_set>
#include <utility>

#include "entdec/errors.hpp"

namespace entdec {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) {
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) {
      out += "x";
    }
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() noexcept : previous_(g_grad_enabled) { g_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename S>
Tensor<S> Tensor<S>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), S{0}, requires_grad);
}

template <typename S>
Tensor<S> Tensor<S>::full(Shape shape, S value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value.assign(shape_numel(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor{std::move(node)};
}

template <typename S>
Tensor<S> Tensor<S>::from(Shape shape, std::vector<S> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("Tensor::from: shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor{std::move(node)};
}

template <typename S>
Tensor<S> Tensor<S>::scalar(S value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename S>
std::size_t Tensor<S>::rows() const {
  return rank() == 2 ? node_->shape[0] : 1;
}

template <typename S>
std::size_t Tensor<S>::cols() const {
  switch (rank()) {
    case 0:
      return 1;
    case 1:
      return node_->shape[0];
    default:
      return node_->shape[1];
  }
}

template <typename S>
S Tensor<S>::item() const {
  if (numel() != 1) {
    throw UsageError("item() on tensor of shape " + shape_string(shape()));
  }
  return node_->value[0];
}

template <typename S>
void Tensor<S>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), S{0});
}

template <typename S>
void Tensor<S>::backward() const {
  if (!defined() || numel() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " +
                     (defined() ? shape_string(shape()) : std::string("<undefined>")));
  }
  if (!node_->requires_grad) {
    return;
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf()) {
      n->grad.assign(n->value.size(), S{0});
    }
  }
  node_->grad_buffer()[0] += S{1};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) {
      (*it)->backward(**it);
    }
  }
}

template <typename S>
Tensor<S> Tensor<S>::detach() const {
  return from(shape(), node_->value, false);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace entdec
