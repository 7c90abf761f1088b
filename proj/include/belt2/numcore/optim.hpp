#pragma once

#include <vector>

#include "belt2/numcore/tensor.hpp"

namespace belt2 {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay Adam. Parameters that do not require grad, or
/// that received no gradient this step, are left untouched (bit-exact).
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  void step();
  void zero_grad();
  void set_lr(double lr) { cfg_.lr = lr; }
  const AdamWConfig& config() const { return cfg_; }
  long steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamWConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

/// Global L2 norm of the gradients currently held by `params`.
double grad_norm(const std::vector<Tensor>& params);

/// Rescales gradients so their global norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace belt2
