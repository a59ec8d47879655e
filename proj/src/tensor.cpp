#include "inkl/tensor.hpp"

#include <algorithm>
#include <limits>
#include <malloc.h>
#include <sstream>
#include <unordered_set>

namespace inkl::ad {

namespace {
thread_local bool g_grad_enabled = true;
thread_local std::uint64_t g_flops = 0;
thread_local bool g_kink_active = false;
thread_local double g_kink_margin = std::numeric_limits<double>::infinity();

// Every op allocates its output. With glibc defaults, buffers above 128 KiB
// are fresh mmaps and each use pays page faults; keep them in the heap.
const bool g_allocator_tuned = [] {
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return true;
}();
}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("shape " + shape_str(shape) + " has a negative extent");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::uint64_t flop_count() { return g_flops; }
void reset_flop_count() { g_flops = 0; }
void add_flops(std::uint64_t n) { g_flops += n; }

KinkMonitor::KinkMonitor() : previous_(g_kink_margin), previous_active_(g_kink_active) {
  g_kink_active = true;
  g_kink_margin = std::numeric_limits<double>::infinity();
}
KinkMonitor::~KinkMonitor() {
  g_kink_active = previous_active_;
  g_kink_margin = previous_active_ ? std::min(previous_, g_kink_margin) : previous_;
}
double KinkMonitor::min_margin() const { return g_kink_margin; }

void report_kink_margin(double margin) {
  if (g_kink_active) g_kink_margin = std::min(g_kink_margin, margin);
}
bool kink_monitor_active() { return g_kink_active; }

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return from(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

template <typename T>
int Tensor<T>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
  }
  return node_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
T Tensor<T>::at(int row, int col) const {
  const int cols = dim(-1);
  return node_->value[static_cast<std::size_t>(row) * cols + col];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
std::vector<T> Tensor<T>::grad() const {
  if (node_->grad.empty()) return std::vector<T>(node_->value.size(), T(0));
  return node_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(node_->shape, node_->value, false);
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (node_->backward_done) {
    throw StateError("backward() already ran on this loss; build a new graph first");
  }
  node_->backward_done = true;
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

template <typename T>
static Tensor<T> make_result_impl(Shape shape, std::vector<T> value,
                                  std::vector<std::shared_ptr<Node<T>>> parents,
                                  std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool needs = g_grad_enabled &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const auto& p) { return p && p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  std::vector<std::shared_ptr<Node<T>>> parents;
  parents.reserve(inputs.size());
  for (const auto* t : inputs) parents.push_back(t->node_ptr());
  return make_result_impl<T>(std::move(shape), std::move(value), std::move(parents),
                             std::move(backward_fn));
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const std::vector<Tensor<T>>& inputs,
                      std::function<void(Node<T>&)> backward_fn) {
  std::vector<std::shared_ptr<Node<T>>> parents;
  parents.reserve(inputs.size());
  for (const auto& t : inputs) parents.push_back(t.node_ptr());
  return make_result_impl<T>(std::move(shape), std::move(value), std::move(parents),
                             std::move(backward_fn));
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>,
                                   std::initializer_list<const Tensor<float>*>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    std::initializer_list<const Tensor<double>*>,
                                    std::function<void(Node<double>&)>);
template Tensor<float> make_result(Shape, std::vector<float>, const std::vector<Tensor<float>>&,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>,
                                    const std::vector<Tensor<double>>&,
                                    std::function<void(Node<double>&)>);

}  // namespace inkl::ad
