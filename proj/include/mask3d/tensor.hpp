// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a reverse-mode gradient graph.
//
// A Tensor is a cheap handle onto a shared TensorImpl. Operations in ops.hpp
// produce new tensors and, when gradients are enabled and any operand requires
// them, attach a GradNode recording the operands and a closure that pushes the
// output gradient back into them. backward() walks the resulting DAG in
// reverse topological order.
//
// Leaf gradients accumulate across backward() calls until zero_grad().
#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mask3d {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorImpl;

template <typename T>
struct GradNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  /// Reads out.grad and accumulates into the grads of `inputs`.
  std::function<void(const TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<T>> storage;
  bool requires_grad = false;
  std::vector<T> grad;  // empty until first written
  std::shared_ptr<GradNode<T>> node;

  std::span<const T> data() const { return {storage->data(), storage->size()}; }
  std::span<T> ensure_grad();
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  /// Writable view of the storage. Only valid on tensors without a GradNode.
  std::span<T> mutable_data();
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient buffer; all zeros when nothing has been accumulated yet.
  std::vector<T> grad() const;
  std::span<const T> grad_view() const;
  void zero_grad();

  /// Same storage, no graph, no gradient.
  Tensor detach() const;
  /// Same storage and requires_grad flag, separate gradient buffer. Used to
  /// give each data-parallel worker its own accumulation target.
  Tensor alias_leaf() const;
  /// Deep copy of the values as a new leaf.
  Tensor clone() const;
  template <typename U>
  Tensor<U> cast() const;

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Creates an operation result. The node is attached only if gradients are
/// enabled on this thread and at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(const TensorImpl<T>&)> backward);

/// Backward-graph records reachable from a root, in topological order: each
/// record's non-leaf inputs appear before it.
template <typename T>
class GraphTape {
 public:
  static GraphTape build(const Tensor<T>& root);
  const std::vector<std::shared_ptr<TensorImpl<T>>>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

 private:
  std::vector<std::shared_ptr<TensorImpl<T>>> records_;
};

/// Seeds d(loss)/d(loss) = 1 and propagates. `loss` must hold one element.
template <typename T>
void backward(const Tensor<T>& loss);

bool grad_enabled();

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// When on, ops that require finite inputs (softmax) throw NumericError on
/// NaN/Inf. Defaults to on in debug builds.
bool numeric_checks_enabled();
void set_numeric_checks(bool enabled);

}  // namespace mask3d
