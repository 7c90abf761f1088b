#include "belt2/numcore/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "belt2/error.hpp"

namespace belt2 {

namespace {

std::atomic<Precision> g_precision{Precision::kFloat32};
std::atomic<bool> g_check_finite{false};
thread_local bool t_grad_enabled = true;

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeMismatch("negative dimension in " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Precision precision() { return g_precision.load(); }
void set_precision(Precision p) { g_precision.store(p); }

bool check_finite_enabled() { return g_check_finite.load(); }
void set_check_finite(bool on) { g_check_finite.store(on); }

bool grad_enabled() { return t_grad_enabled; }

NoGradScope::NoGradScope() : saved_(t_grad_enabled) { t_grad_enabled = false; }
NoGradScope::~NoGradScope() { t_grad_enabled = saved_; }

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) { return full(shape, 0.0, requires_grad); }

Tensor Tensor::full(const Shape& shape, double v, bool requires_grad) {
  return from(shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), v), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeMismatch("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                        " values, got " + std::to_string(values.size()));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  const auto r = static_cast<std::int64_t>(rows.size());
  const auto c = r ? static_cast<std::int64_t>(rows.begin()->size()) : 0;
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(r * c));
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != c) throw ShapeMismatch("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(values), requires_grad);
}

std::int64_t Tensor::dim(int i) const {
  const auto& s = node_->shape;
  if (i < 0) i += static_cast<int>(s.size());
  if (i < 0 || i >= static_cast<int>(s.size())) throw ShapeMismatch("dim index out of range");
  return s[static_cast<std::size_t>(i)];
}

std::int64_t Tensor::rows() const {
  const auto& s = node_->shape;
  if (s.size() <= 1) return 1;
  std::int64_t n = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) n *= s[i];
  return n;
}

std::int64_t Tensor::cols() const {
  const auto& s = node_->shape;
  return s.empty() ? 1 : s.back();
}

double Tensor::item() const {
  if (node_->value.size() != 1) throw NonScalarRoot("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value, false); }

void backward(const Tensor& root, double seed) {
  if (!root.defined() || root.numel() != 1) {
    throw NonScalarRoot("backward needs a scalar root, got " +
                        (root.defined() ? shape_str(root.shape()) : std::string("undefined")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS: order[i] appears after all of its parents.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  root.node()->grad_buffer()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->is_leaf && n->backward) n->backward(*n);
  }
  // Intermediate grads are scratch; release them.
  for (Node* n : order) {
    if (!n->is_leaf) {
      n->grad.clear();
      n->grad.shrink_to_fit();
    }
  }
}

namespace detail {

Tensor make_result(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward_fn) {
  const Precision p = precision();
  if (p == Precision::kFloat32) {
    for (auto& v : values) v = round_to_precision(v, p);
  }
  if (check_finite_enabled()) {
    for (double v : values) {
      if (!std::isfinite(v)) throw NonFinite(std::string("non-finite output from op ") + op);
    }
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool needs_grad = false;
  if (t_grad_enabled) {
    for (const auto& t : parents) needs_grad = needs_grad || t.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->is_leaf = false;
    node->parents.reserve(parents.size());
    for (auto& t : parents) node->parents.push_back(t.node_ptr());
    node->backward = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace belt2
