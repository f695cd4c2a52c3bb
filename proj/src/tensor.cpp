#include "oddvox/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace oddvox::diffcore {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::atomic<std::uint64_t> g_flops{0};
std::atomic<std::int64_t> g_live_bytes{0};
std::atomic<std::int64_t> g_peak_bytes{0};
std::atomic<bool> g_finite_checks{true};
thread_local bool t_grad_enabled = true;

void track_alloc(std::int64_t bytes) {
  const std::int64_t live = g_live_bytes.fetch_add(bytes) + bytes;
  std::int64_t peak = g_peak_bytes.load();
  while (live > peak && !g_peak_bytes.compare_exchange_weak(peak, live)) {
  }
}

}  // namespace

std::uint64_t flop_count() { return g_flops.load(); }
void reset_flop_count() { g_flops.store(0); }
void add_flops(std::uint64_t n) { g_flops.fetch_add(n, std::memory_order_relaxed); }

std::int64_t live_tensor_bytes() { return g_live_bytes.load(); }
std::int64_t peak_tensor_bytes() { return g_peak_bytes.load(); }
void reset_peak_tensor_bytes() { g_peak_bytes.store(g_live_bytes.load()); }

void set_finite_checks(bool on) { g_finite_checks.store(on); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }
bool grad_enabled() { return t_grad_enabled; }

template <typename S>
static void check_finite_impl(const S* data, std::int64_t n, const char* op_name) {
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(data[i])) {
      std::ostringstream os;
      os << "non-finite value produced by op '" << op_name << "' at index " << i;
      throw NumericError(os.str());
    }
  }
}

void check_finite_span(const float* data, std::int64_t n, const char* op_name) {
  check_finite_impl(data, n, op_name);
}
void check_finite_span(const double* data, std::int64_t n, const char* op_name) {
  check_finite_impl(data, n, op_name);
}

template <typename T>
Node<T>::Node(Shape s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
  track_alloc(static_cast<std::int64_t>(values.size() * sizeof(T)));
}

template <typename T>
Node<T>::~Node() {
  track_alloc(-static_cast<std::int64_t>((values.size() + grad.size()) * sizeof(T)));
}

template <typename T>
void Node<T>::ensure_grad() {
  if (grad.empty()) {
    grad.assign(values.size(), T(0));
    track_alloc(static_cast<std::int64_t>(grad.size() * sizeof(T)));
  }
}

template <typename T>
const T* BackCtx<T>::grad_out() const {
  return self_->grad.data();
}

template <typename T>
T* BackCtx<T>::parent_grad(int i) {
  Node<T>* p = self_->parents[static_cast<std::size_t>(i)].get();
  if (!p->needs_grad) return nullptr;
  if (sink_ && p->is_leaf() && p->requires_grad) return sink_->buffer(p);
  p->ensure_grad();
  return p->grad.data();
}

template <typename T>
T* GradStore<T>::buffer(Node<T>* leaf) {
  auto it = bufs_.find(leaf);
  if (it == bufs_.end()) {
    it = bufs_.emplace(leaf, std::vector<T>(leaf->values.size(), T(0))).first;
  }
  return it->second.data();
}

template <typename T>
const std::vector<T>* GradStore<T>::find(Node<T>* leaf) const {
  auto it = bufs_.find(leaf);
  return it == bufs_.end() ? nullptr : &it->second;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape s) {
  const auto n = shape_numel(s);
  return Tensor(std::make_shared<Node<T>>(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0))));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape s, T value) {
  const auto n = shape_numel(s);
  return Tensor(std::make_shared<Node<T>>(std::move(s), std::vector<T>(static_cast<std::size_t>(n), value)));
}

template <typename T>
Tensor<T> Tensor<T>::from_values(Shape s, std::vector<T> values) {
  if (shape_numel(s) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("from_values: shape " + shape_str(s) + " wants " +
                         std::to_string(shape_numel(s)) + " values, got " +
                         std::to_string(values.size()));
  }
  return Tensor(std::make_shared<Node<T>>(std::move(s), std::move(values)));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from_values({}, {value});
}

template <typename T>
Tensor<T> Tensor<T>::randn(Shape s, Rng& rng, double stddev) {
  const auto n = shape_numel(s);
  std::vector<T> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<T>(rng.normal() * stddev);
  return from_values(std::move(s), std::move(v));
}

template <typename T>
Tensor<T> Tensor<T>::truncated_normal(Shape s, Rng& rng, double stddev) {
  const auto n = shape_numel(s);
  std::vector<T> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<T>(rng.truncated_normal(stddev));
  return from_values(std::move(s), std::move(v));
}

template <typename T>
std::vector<T>& Tensor<T>::mutable_values() {
  if (!node_->is_leaf()) {
    throw ConfigError("mutable_values: only leaf tensors may be mutated in place");
  }
  return node_->values;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (on && !node_->is_leaf()) {
    throw ConfigError("set_requires_grad: only leaf tensors can require grad");
  }
  node_->requires_grad = on;
  node_->needs_grad = on;
  return *this;
}

template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
  if (node_->grad.empty()) {
    throw ConfigError("grad(): no gradient present on this tensor");
  }
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) {
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item(): tensor has shape " + shape_str(shape()) + ", expected a scalar");
  }
  return node_->values[0];
}

template <typename T>
void Tensor<T>::backward(GradStore<T>* sink) const {
  if (numel() != 1) {
    throw ConfigError("backward(): loss must be a scalar, got shape " + shape_str(shape()));
  }
  Node<T>* root = node_.get();
  if (!root->needs_grad) return;  // nothing reachable requires grad

  // Iterative post-order DFS over needs_grad parents; deterministic by
  // construction order of the graph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  struct Frame {
    Node<T>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({root, 0});
  visited.insert(root);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node<T>* p = f.node->parents[f.next_parent++].get();
      if (p->needs_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Fresh pass: clear grads of interior nodes (leaf grads accumulate
  // across backward calls by contract).
  for (Node<T>* n : order) {
    if (!n->is_leaf()) {
      n->ensure_grad();
      std::fill(n->grad.begin(), n->grad.end(), T(0));
    }
  }
  root->ensure_grad();
  root->grad[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn) continue;
    BackCtx<T> ctx(n, sink);
    n->backward_fn(ctx);
  }

  if (finite_checks_enabled()) {
    for (Node<T>* n : order) {
      if (n->is_leaf() && n->requires_grad && !sink && !n->grad.empty()) {
        check_finite_span(n->grad.data(), static_cast<std::int64_t>(n->grad.size()), "backward");
      }
    }
  }
}

template <typename T>
Tensor<T> make_op(const char* op_name, Shape shape, std::vector<T> values,
                  const std::vector<Tensor<T>>& parents,
                  std::function<void(BackCtx<T>&)> backward_fn) {
  if (finite_checks_enabled()) {
    check_finite_span(values.data(), static_cast<std::int64_t>(values.size()), op_name);
  }
  auto node = std::make_shared<Node<T>>(std::move(shape), std::move(values));
  node->op_name = op_name;
  bool needs = false;
  if (grad_enabled()) {
    for (const auto& p : parents) {
      if (p.defined() && p.node()->needs_grad) {
        needs = true;
        break;
      }
    }
  }
  if (needs) {
    node->needs_grad = true;
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node_ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template struct Node<float>;
template struct Node<double>;
template class Tensor<float>;
template class Tensor<double>;
template class GradStore<float>;
template class GradStore<double>;
template class BackCtx<float>;
template class BackCtx<double>;

template Tensor<float> make_op<float>(const char*, Shape, std::vector<float>,
                                      const std::vector<Tensor<float>>&,
                                      std::function<void(BackCtx<float>&)>);
template Tensor<double> make_op<double>(const char*, Shape, std::vector<double>,
                                        const std::vector<Tensor<double>>&,
                                        std::function<void(BackCtx<double>&)>);

}  // namespace oddvox::diffcore
