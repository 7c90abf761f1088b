#include "belt2/nn/params.hpp"

#include <cstring>

#include "belt2/error.hpp"

namespace belt2 {

Tensor ParameterSet::add(const std::string& name, const Shape& shape, std::vector<double> values, bool trainable) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  const Precision p = precision();
  for (auto& v : values) v = round_to_precision(v, p);
  Tensor t = Tensor::from(shape, std::move(values), trainable && !frozen_);
  params_.push_back({name, t, trainable});
  return t;
}

Tensor ParameterSet::add_normal(const std::string& name, const Shape& shape, double std, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal(0.0, std);
  return add(name, shape, std::move(v));
}

Tensor ParameterSet::add_constant(const std::string& name, const Shape& shape, double v, bool trainable) {
  return add(name, shape, std::vector<double>(static_cast<std::size_t>(shape_numel(shape)), v), trainable);
}

bool ParameterSet::contains(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

Tensor ParameterSet::get(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.tensor;
  throw CheckpointMismatch("no parameter named '" + name + "'");
}

std::vector<Tensor> ParameterSet::trainable() const {
  std::vector<Tensor> out;
  for (const auto& p : params_)
    if (p.trainable) out.push_back(p.tensor);
  return out;
}

std::int64_t ParameterSet::numel() const {
  std::int64_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParameterSet::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& p : params_) {
    p.tensor.set_requires_grad(p.trainable && !frozen);
    if (frozen) p.tensor.zero_grad();
  }
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::uint64_t ParameterSet::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) {
    for (double v : p.tensor.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

}  // namespace belt2
