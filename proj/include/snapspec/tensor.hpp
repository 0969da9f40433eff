#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace snapspec {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Global switch for graph recording. Disabled inside NoGradGuard scopes, which
// is how inference and finite-difference probes avoid building tapes.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads self.grad and accumulates into the parents' grad buffers.
  std::function<void(TensorNode&)> backward_fn;

  void accumulate(std::span<const T> g);
  std::vector<T>& grad_buffer();
};

// Dense row-major n-d array with optional reverse-mode gradient tracking.
//
// A Tensor is a cheap handle; copies share the same node. Values are treated
// as immutable once an op has consumed them. The exceptions are leaf tensors
// (parameters) whose data an optimizer or a finite-difference probe may edit
// through mutable_data().
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<const T> data() const;
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t flat_index) const { return data()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  // Gradient buffer; zero-filled view when no gradient has been accumulated.
  std::vector<T> grad() const;
  void zero_grad();

  bool is_leaf() const;
  bool all_finite() const;
  Tensor detach() const;

  // Reverse-mode pass from a single-element tensor. Seeds d(self)/d(self) = 1.
  void backward() const;

  const std::shared_ptr<TensorNode<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<TensorNode<T>> node);

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Builds an op result; records parents and the backward closure only when
// GradMode is enabled and at least one input requires a gradient.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::vector<Tensor<T>> inputs,
                      std::function<void(TensorNode<T>&)> backward_fn);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template struct TensorNode<float>;
extern template struct TensorNode<double>;

}  // namespace snapspec
