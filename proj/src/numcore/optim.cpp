#include "belt2/numcore/optim.hpp"

#include <cmath>

namespace belt2 {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
}

void AdamW::step() {
  ++t_;
  const Precision prec = precision();
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    if (!p.requires_grad() || !p.has_grad()) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    if (m.empty()) {
      m.assign(static_cast<std::size_t>(p.numel()), 0.0);
      v.assign(static_cast<std::size_t>(p.numel()), 0.0);
    }
    auto w = p.mutable_data();
    const auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      w[i] = round_to_precision(w[i] - cfg_.lr * (update + cfg_.weight_decay * w[i]), prec);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double grad_norm(const std::vector<Tensor>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  const double n = grad_norm(params);
  if (n > max_norm && n > 0.0) {
    const double k = max_norm / n;
    for (auto p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.grad_buffer()) g *= k;
    }
  }
  return n;
}

}  // namespace belt2
