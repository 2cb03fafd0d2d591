#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dape/tensor.hpp"

namespace dape {

/// One vertex of the reverse-mode tape. Interior nodes keep their parents
/// alive only when gradients are required, so inference graphs free
/// intermediates as soon as the handles go out of scope.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer();
  void accumulate(const Tensor& g);
};

/// Handle to a tape node. Copies share the node; leaves created from a
/// Tensor act as parameters or inputs.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }

  const Tensor& value() const { return node_->value; }
  /// Mutable leaf value; used by optimizers and checkpoint loading.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t numel() const { return node_->value.numel(); }

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Build an interior node. `fn` receives the node after its grad has been
/// accumulated and must push gradients into parents that require them.
Var make_result(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn);

/// Reverse sweep from a single-element root, seeded with 1.
void backward(const Var& root);

}  // namespace dape
