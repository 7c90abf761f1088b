#include "belt2/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace belt2 {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
  NoGradScope no_grad;
  Tensor probe = x.detach();
  auto values = probe.mutable_data();
  std::vector<double> grad(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + h;
    const double up = f(probe);
    values[i] = orig - h;
    const double down = f(probe);
    values[i] = orig;
    grad[i] = (up - down) / (2.0 * h);
  }
  return Tensor::from(x.shape(), std::move(grad));
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

GradCheckResult check_gradients(const std::function<Tensor()>& loss, const std::vector<Tensor>& params, double h) {
  for (auto p : params) p.zero_grad();
  backward(loss());

  GradCheckResult result;
  NoGradScope no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    std::vector<double> analytic(static_cast<std::size_t>(p.numel()), 0.0);
    if (p.has_grad()) analytic.assign(p.grad().begin(), p.grad().end());
    auto values = p.mutable_data();
    std::vector<double> numeric(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + h;
      const double up = loss().item();
      values[i] = orig - h;
      const double down = loss().item();
      values[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    const double err = relative_error(analytic, numeric);
    if (err > result.max_rel_err || result.worst_param.empty()) {
      result.max_rel_err = std::max(result.max_rel_err, err);
      if (err >= result.max_rel_err) result.worst_param = "param#" + std::to_string(k);
    }
  }
  return result;
}

}  // namespace belt2
