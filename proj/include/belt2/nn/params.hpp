#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "belt2/numcore/rng.hpp"
#include "belt2/numcore/tensor.hpp"

namespace belt2 {

struct Parameter {
  std::string name;
  Tensor tensor;
  bool trainable = true;  // false for buffers such as batch-norm running stats
};

/// Ordered, uniquely named collection of leaf tensors. The insertion order is
/// the checkpoint order.
class ParameterSet {
 public:
  Tensor add(const std::string& name, const Shape& shape, std::vector<double> values, bool trainable = true);
  Tensor add_normal(const std::string& name, const Shape& shape, double std, Rng& rng);
  Tensor add_constant(const std::string& name, const Shape& shape, double v, bool trainable = true);

  bool contains(const std::string& name) const;
  Tensor get(const std::string& name) const;
  const std::vector<Parameter>& all() const { return params_; }
  std::vector<Tensor> trainable() const;
  std::int64_t numel() const;

  /// Freezing clears requires_grad on every parameter; gradients can no
  /// longer reach them.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }
  void zero_grad();

  /// FNV-1a over the bytes of every stored value, in order.
  std::uint64_t hash() const;

 private:
  std::vector<Parameter> params_;
  bool frozen_ = false;
};

}  // namespace belt2
