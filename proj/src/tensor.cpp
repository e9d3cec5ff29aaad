// SPDX-License-Identifier: Apache-2.0
#include "mask3d/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "mask3d/error.hpp"

namespace mask3d {

namespace {

thread_local bool t_grad_enabled = true;

#ifdef NDEBUG
std::atomic<bool> g_numeric_checks{false};
#else
std::atomic<bool> g_numeric_checks{true};
#endif

template <typename T>
std::shared_ptr<TensorImpl<T>> new_impl(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor of shape " + shape_str(shape) + " cannot hold " +
                         std::to_string(values.size()) + " values");
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<std::vector<T>>(std::move(values));
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool numeric_checks_enabled() { return g_numeric_checks.load(std::memory_order_relaxed); }
void set_numeric_checks(bool enabled) { g_numeric_checks.store(enabled, std::memory_order_relaxed); }

template <typename T>
std::span<T> TensorImpl<T>::ensure_grad() {
  if (grad.size() != storage->size()) grad.assign(storage->size(), T(0));
  return grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return Tensor(new_impl<T>(std::move(shape), std::vector<T>(n, value), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  return Tensor(new_impl<T>(std::move(shape), std::move(values), requires_grad));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from({1}, {value});
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
  }
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return shape_numel(shape());
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  if (!impl_) throw ContractError("use of undefined tensor");
  return impl_->data();
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  if (!impl_) throw ContractError("use of undefined tensor");
  if (impl_->node) throw ContractError("cannot mutate the output of a recorded operation");
  return {impl_->storage->data(), impl_->storage->size()};
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return data()[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  if (!impl_) throw ContractError("use of undefined tensor");
  if (impl_->node) throw ContractError("requires_grad can only be changed on leaves");
  impl_->requires_grad = flag;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return impl_ && impl_->grad.size() == impl_->storage->size();
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (has_grad()) return impl_->grad;
  return std::vector<T>(numel(), T(0));
}

template <typename T>
std::span<const T> Tensor<T>::grad_view() const {
  if (!has_grad()) return {};
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape();
  impl->storage = impl_->storage;
  return Tensor(impl);
}

template <typename T>
Tensor<T> Tensor<T>::alias_leaf() const {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape();
  impl->storage = impl_->storage;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(impl);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from(shape(), std::vector<T>(data().begin(), data().end()), requires_grad());
}

template <typename T>
template <typename U>
Tensor<U> Tensor<T>::cast() const {
  std::vector<U> out(numel());
  std::transform(data().begin(), data().end(), out.begin(), [](T v) { return static_cast<U>(v); });
  return Tensor<U>::from(shape(), std::move(out), requires_grad());
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values, const std::vector<Tensor<T>>& inputs,
                      const char* op, std::function<void(const TensorImpl<T>&)> backward) {
  auto impl = new_impl<T>(std::move(shape), std::move(values), false);
  if (!t_grad_enabled) return Tensor<T>(impl);
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return Tensor<T>(impl);
  impl->requires_grad = true;
  auto node = std::make_shared<GradNode<T>>();
  node->op = op;
  node->inputs.reserve(inputs.size());
  for (const auto& in : inputs) node->inputs.push_back(in.impl());
  node->backward = std::move(backward);
  impl->node = std::move(node);
  return Tensor<T>(impl);
}

template <typename T>
GraphTape<T> GraphTape<T>::build(const Tensor<T>& root) {
  GraphTape tape;
  if (!root.defined() || !root.impl()->node) return tape;
  // Iterative post-order DFS; a record is emitted after all of its inputs.
  std::unordered_set<const TensorImpl<T>*> visited;
  std::vector<std::pair<std::shared_ptr<TensorImpl<T>>, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->node->inputs;
    if (next < inputs.size()) {
      auto child = inputs[next++];
      if (child->node && child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
      continue;
    }
    tape.records_.push_back(impl);
    stack.pop_back();
  }
  return tape;
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;
  auto& root = *loss.impl();
  if (!root.node) {
    root.ensure_grad()[0] += T(1);
    return;
  }
  const auto tape = GraphTape<T>::build(loss);
  // Intermediate gradients are per-call; only leaves accumulate.
  for (const auto& rec : tape.records()) {
    rec->grad.assign(rec->storage->size(), T(0));
  }
  root.grad[0] = T(1);
  for (auto it = tape.records().rbegin(); it != tape.records().rend(); ++it) {
    const auto& rec = **it;
    rec.node->backward(rec);
  }
  // Release intermediate buffers; the graph may be large.
  for (const auto& rec : tape.records()) {
    if (rec.get() != &root) std::vector<T>().swap(rec->grad);
  }
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;
template class Tensor<float>;
template class Tensor<double>;
template class GraphTape<float>;
template class GraphTape<double>;
template Tensor<double> Tensor<float>::cast<double>() const;
template Tensor<float> Tensor<double>::cast<float>() const;
template Tensor<float> Tensor<float>::cast<float>() const;
template Tensor<double> Tensor<double>::cast<double>() const;
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   const char*, std::function<void(const TensorImpl<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const std::vector<Tensor<double>>&,
                                    const char*, std::function<void(const TensorImpl<double>&)>);
template void backward(const Tensor<float>&);
template void backward(const Tensor<double>&);

}  // namespace mask3d
