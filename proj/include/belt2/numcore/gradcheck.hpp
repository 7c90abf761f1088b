#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "belt2/numcore/tensor.hpp"

namespace belt2 {

/// Central differences (f(x+h) - f(x-h)) / 2h, one coordinate at a time.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// ||a - b||_2 / max(||a||_2, ||b||_2, 1e-12)
double relative_error(std::span<const double> a, std::span<const double> b);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
};

/// Runs backward() on loss() and compares every leaf in `params` against
/// central differences of loss().item(). `loss` must rebuild the graph from
/// the current leaf values on each call. Intended for Float64 mode.
GradCheckResult check_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& params,
                                double h = 1e-6);

}  // namespace belt2
