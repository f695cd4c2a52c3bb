#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "oddvox/errors.hpp"
#include "oddvox/rng.hpp"

namespace oddvox::diffcore {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// ---------------------------------------------------------------------------
// Instrumentation counters (process-global).
//
// Flops count multiply-accumulates as 2 flops; only the compute-heavy ops
// (matmul, conv3d, attention via matmul) report. Live bytes track every
// value/grad buffer owned by graph nodes, parameters included, so a bench
// peak reflects weights + activations.
// ---------------------------------------------------------------------------
std::uint64_t flop_count();
void reset_flop_count();
void add_flops(std::uint64_t n);

std::int64_t live_tensor_bytes();
std::int64_t peak_tensor_bytes();
void reset_peak_tensor_bytes();  // resets peak to current live

// When true (default), every op output is scanned for NaN/Inf and a
// NumericError is raised naming the op. Costs one pass over each result.
void set_finite_checks(bool on);
bool finite_checks_enabled();

template <typename T>
struct Node;

template <typename T>
class GradStore;

// Resolves gradient accumulation buffers during backward. Parent buffers
// are node-resident except for leaf tensors when a GradStore redirects
// them (used by multi-threaded training).
template <typename T>
class BackCtx {
 public:
  BackCtx(Node<T>* self, GradStore<T>* sink) : self_(self), sink_(sink) {}
  const T* grad_out() const;
  // Accumulation buffer for parents[i], or nullptr if that parent does not
  // participate in differentiation.
  T* parent_grad(int i);
  Node<T>* parent(int i) const { return self_->parents[i].get(); }
  Node<T>* self() const { return self_; }

 private:
  Node<T>* self_;
  GradStore<T>* sink_;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // sized lazily during backward / on demand
  bool requires_grad = false;       // leaf flag, set by the user
  bool needs_grad = false;          // participates in some backward pass
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(BackCtx<T>&)> backward_fn;
  const char* op_name = "leaf";

  Node(Shape s, std::vector<T> v);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  bool is_leaf() const { return parents.empty(); }
  void ensure_grad();
};

// Thread-local gradient sink: maps leaf nodes to external buffers so
// concurrent backward passes over shared parameters never race. Buffers
// are created on first touch, zero-initialized.
template <typename T>
class GradStore {
 public:
  T* buffer(Node<T>* leaf);
  // Deterministic reduction entry point: returns nullptr when this store
  // never touched `leaf`.
  const std::vector<T>* find(Node<T>* leaf) const;
  void clear() { bufs_.clear(); }

 private:
  std::unordered_map<Node<T>*, std::vector<T>> bufs_;
};

// While alive on a thread, ops built on that thread record no graph edges:
// results are plain values and memory is released eagerly. Used for
// inference and benchmarks.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// ---------------------------------------------------------------------------
// Tensor: shared handle to a graph node. Dense row-major storage.
// ---------------------------------------------------------------------------
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, T value);
  static Tensor from_values(Shape s, std::vector<T> values);
  static Tensor scalar(T value);
  static Tensor randn(Shape s, Rng& rng, double stddev = 1.0);
  static Tensor truncated_normal(Shape s, Rng& rng, double stddev);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return node_->numel(); }

  const std::vector<T>& values() const { return node_->values; }
  // Direct mutation is for leaf tensors only (optimizer updates, test
  // setup); mutating a recorded intermediate would corrupt its graph.
  std::vector<T>& mutable_values();

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on);

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const;
  void zero_grad();

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  // calls; pass a GradStore to redirect leaf accumulation instead.
  void backward(GradStore<T>* sink = nullptr) const;

  T item() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Builds a graph node. `parents` that are undefined tensors are rejected.
// `backward_fn` may be empty for non-differentiable results. Performs the
// finiteness check and needs_grad propagation.
template <typename T>
Tensor<T> make_op(const char* op_name, Shape shape, std::vector<T> values,
                  const std::vector<Tensor<T>>& parents,
                  std::function<void(BackCtx<T>&)> backward_fn);

void check_finite_span(const float* data, std::int64_t n, const char* op_name);
void check_finite_span(const double* data, std::int64_t n, const char* op_name);

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class GradStore<float>;
extern template class GradStore<double>;
extern template class BackCtx<float>;
extern template class BackCtx<double>;

}  // namespace oddvox::diffcore
