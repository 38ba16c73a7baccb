#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace entdec {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

namespace detail {

template <typename S>
struct Node {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const noexcept { return !backward; }

  std::vector<S>& grad_buffer() {
    if (grad.size() != value.size()) {
      grad.assign(value.size(), S{0});
    }
    return grad;
  }
};

}  // namespace detail

/// Whether newly created tensors record the graph needed by backward().
bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime (evaluation, decoding).
class NoGradGuard {
 public:
  NoGradGuard() noexcept;
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor handle with reverse-mode autodiff.
///
/// Copies share the underlying node, so a Tensor behaves like a reference to
/// an immutable value plus a gradient buffer. Ops in ops.hpp create new
/// nodes; only leaves (parameters, inputs) should be mutated in place, and
/// only between graph constructions.
///
/// Rank 0 is a scalar, rank 1 a vector (treated as one row by matrix ops) and
/// rank 2 a matrix. Nothing here needs more dimensions.
template <typename S>
class Tensor {
 public:
  using Scalar = S;
  using Node = detail::Node<S>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) noexcept : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, S value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<S> values, bool requires_grad = false);
  static Tensor scalar(S value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  /// Matrix view: rank-1 tensors are a single row, scalars are 1x1.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const S> data() const { return node_->value; }
  std::span<S> mutable_data() { return node_->value; }
  S item() const;
  S at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }
  S operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  /// Gradient accumulated by backward(); zeros if nothing reached this tensor.
  std::span<const S> grad() const { return node_->grad_buffer(); }
  std::span<S> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls; intermediate gradients are recomputed each call.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

/// Converts values between precisions (new leaf, no graph).
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> values(t.data().begin(), t.data().end());
  return Tensor<To>::from(t.shape(), std::move(values), requires_grad);
}

}  // namespace entdec
