#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace belt2 {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Storage is always double. In Float32 mode every op rounds its output (and
/// the optimizer rounds parameter updates) to single precision, so trained
/// parameters are exactly representable in the float32 checkpoint format.
/// Float64 mode is used by the gradient checks.
enum class Precision { kFloat32, kFloat64 };

Precision precision();
void set_precision(Precision p);

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : saved_(precision()) { set_precision(p); }
  ~PrecisionScope() { set_precision(saved_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

inline double round_to_precision(double v, Precision p) {
  return p == Precision::kFloat32 ? static_cast<double>(static_cast<float>(v)) : v;
}

/// When enabled, every op output is scanned and NaN/Inf raise NonFinite.
bool check_finite_enabled();
void set_check_finite(bool on);

/// Graph recording is thread-local; NoGradScope disables it for inference.
bool grad_enabled();

class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  bool saved_;
};

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  /// Grad buffer, zero-initialized on first access.
  std::vector<double>& grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Handle to a node of the compute graph. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double v, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  /// Row-major matrix literal, e.g. Tensor::matrix({{1, 2}, {3, 4}}).
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
  std::int64_t dim(int i) const;
  /// Product of all leading dims (1 for a 1-D tensor).
  std::int64_t rows() const;
  /// Size of the last dim.
  std::int64_t cols() const;

  std::span<const double> data() const { return node_->value; }
  /// Direct write access. Only meaningful for leaves (parameters, buffers).
  std::span<double> mutable_data() { return node_->value; }
  std::vector<double> to_vector() const { return node_->value; }
  double item() const;
  double at(std::int64_t r, std::int64_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return node_->is_leaf; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::vector<double>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  /// Leaf copy of the values with no graph history.
  Tensor detach() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode pass from a scalar root. Every reachable node runs its
/// backward function exactly once, in reverse topological order; leaf
/// gradients accumulate across calls until zero_grad().
void backward(const Tensor& root, double seed = 1.0);

namespace detail {

/// Builds an op result. Records parents and the backward closure only when
/// grad recording is on and at least one parent requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);

/// Grad buffer of parent i if it participates in differentiation, else null.
inline std::vector<double>* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return &p.grad_buffer();
}

}  // namespace detail

}  // namespace belt2
