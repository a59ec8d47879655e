#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "inkl/errors.hpp"

// Minimal reverse-mode differentiation engine. A Tensor is a shared handle to
// a graph node; ops record a backward closure on their result when any input
// requires a gradient. Calling backward() on a scalar walks the graph once.
namespace inkl::ad {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something flows into it
  bool requires_grad = false;
  bool backward_done = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::span<T> grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  /// Size of one axis; negative axes count from the back.
  int dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  std::span<const T> values() const { return node_->value; }
  /// Direct write access; only meaningful for leaves (parameters, inputs).
  std::span<T> values_mut() { return node_->value; }
  T operator[](std::int64_t i) const { return node_->value[static_cast<std::size_t>(i)]; }
  T at(int row, int col) const;
  T item() const;

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient after backward(); zeros if nothing reached this tensor.
  std::vector<T> grad() const;
  std::span<T> grad_mut() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  const std::string& name() const { return node_->name; }
  void set_name(std::string name) { node_->name = std::move(name); }

  /// Reverse pass from this scalar. A second call on the same loss throws.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Scoped switch that stops ops from recording backward closures.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Multiply-accumulate counter fed by the heavy primitives (matmul, scan,
/// attention scores). Thread-local; used by the FLOP estimates.
std::uint64_t flop_count();
void reset_flop_count();
void add_flops(std::uint64_t n);

/// Non-smooth primitives (max-pool, Chamfer pairing, clamps, smooth-L1) report
/// how far their input is from a kink while a monitor is active. Finite
/// difference checks use it to refuse points where a perturbation of size h
/// could switch branches.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;
  double min_margin() const;

 private:
  double previous_;
  bool previous_active_;
};

void report_kink_margin(double margin);
bool kink_monitor_active();

// Graph construction helper shared by every op.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn);

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward_fn);

/// Gradient buffer of an input node, or an empty span if it needs none.
template <typename T>
std::span<T> grad_of(Node<T>* node) {
  if (node == nullptr || !node->requires_grad) return {};
  return node->grad_buffer();
}

}  // namespace inkl::ad
