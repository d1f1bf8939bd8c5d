#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A Var is a shared handle to a graph node. Nodes keep their parents alive
// only while gradient recording is enabled, so inference under a
// NoGradGuard frees intermediates as soon as their handles go out of scope.

#include <functional>
#include <memory>
#include <vector>

#include "styleformer/ops.hpp"
#include "styleformer/tensor.hpp"

namespace styleformer {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until a gradient reaches this node
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;

  void accumulate(const Tensor<T>& g);
};

/// Thread-local switch for graph recording.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set(bool on) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <class T>
class Var {
 public:
  Var() = default;
  /// Leaf node; `requires_grad` marks trainable parameters and probes.
  explicit Var(Tensor<T> value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  /// Gradient accumulated by backward(); a zero tensor if none arrived.
  Tensor<T> grad() const;
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

  /// In-place update of a leaf (optimizer steps, finite-difference probes).
  Tensor<T>& mutable_value() { return node_->value; }
  void zero_grad() { node_->grad = Tensor<T>(); }

  /// Backpropagates from this 1x1 node with seed gradient 1.
  void backward() const;

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
Var<T> constant(Tensor<T> value) {
  return Var<T>(std::move(value), false);
}

namespace ag {

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, Trans ta = Trans::No, Trans tb = Trans::No);
template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> subtract(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> hadamard(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> scale(const Var<T>& a, T factor);
/// a * s for a 1x1 node s.
template <class T>
Var<T> scale_by(const Var<T>& a, const Var<T>& s);
template <class T>
Var<T> add_row_vector(const Var<T>& a, const Var<T>& v);
template <class T>
Var<T> scale_columns(const Var<T>& a, const Var<T>& v);
template <class T>
Var<T> divide_columns(const Var<T>& a, const Var<T>& v);
template <class T>
Var<T> scale_rows(const Var<T>& a, const Var<T>& v);
template <class T>
Var<T> column_rss(const Var<T>& a, double floor = kDemodFloor);
template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope);
/// Constant 0/1-style mask of leaky ReLU slopes (1 where a >= 0, else slope).
template <class T>
Var<T> leaky_relu_slopes(const Var<T>& a, T slope);
template <class T>
Var<T> softmax_rows(const Var<T>& a);
template <class T>
Var<T> layer_norm_rows(const Var<T>& a, double eps = kLayerNormEps);
template <class T>
Var<T> softplus(const Var<T>& a);
template <class T>
Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t count);
template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <class T>
Var<T> reshape(const Var<T>& a, std::size_t rows, std::size_t cols);
template <class T>
Var<T> upsample_2x(const Var<T>& sheet, std::size_t side);
template <class T>
Var<T> conv3x3(const Var<T>& sheet, std::size_t side, const Var<T>& weight);
/// 1x1 sum of all elements.
template <class T>
Var<T> sum(const Var<T>& a);
template <class T>
Var<T> mean(const Var<T>& a);

}  // namespace ag
}  // namespace styleformer
