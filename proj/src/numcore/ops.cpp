#include "belt2/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "belt2/error.hpp"

namespace belt2 {

using detail::make_result;
using detail::parent_grad;

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel() || a.cols() != b.cols()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

Shape matrix_shape(std::int64_t r, std::int64_t c) { return {r, c}; }

template <typename Fwd, typename Deriv>
Tensor unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  const auto& x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  return make_result(op, a.shape(), std::move(out), {a}, [deriv](Node& self) {
    auto* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < xv.size(); ++i) (*ga)[i] += self.grad[i] * deriv(xv[i], self.value[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result("matmul", matrix_shape(m, n), std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& A = self.parents[0]->value;
    const auto& B = self.parents[1]->value;
    const auto& G = self.grad;
    if (auto* ga = parent_grad(self, 0)) {
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::int64_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
          (*ga)[i * k + p] += s;
        }
      }
    }
    if (auto* gb = parent_grad(self, 1)) {
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::int64_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * G[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const auto r = a.rows(), c = a.cols();
  const auto& x = a.data();
  std::vector<double> out(x.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  return make_result("transpose", matrix_shape(c, r), std::move(out), {a}, [r, c](Node& self) {
    auto* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) (*ga)[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  const auto& x = a.data();
  const auto& y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  const auto& x = a.data();
  const auto& y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  const auto& x = a.data();
  const auto& y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& yv = self.parents[1]->value;
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * yv[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * xv[i];
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a, double eps) {
  return unary(
      "log", a, [eps](double x) { return std::log(std::max(x, eps)); },
      [eps](double x, double) { return x > eps ? 1.0 / x : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      "sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& a) {
  return unary(
      "silu", a, [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Tensor gelu(const Tensor& a) {
  constexpr double kSqrt2OverPi = 0.7978845608028654;
  return unary(
      "gelu", a,
      [](double x) { return 0.5 * x * (1.0 + std::tanh(kSqrt2OverPi * (x + kGeluCubic * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(kSqrt2OverPi * (x + kGeluCubic * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
      });
}

Tensor glu(const Tensor& a) {
  const auto r = a.rows(), c2 = a.cols();
  if (c2 % 2 != 0) throw ShapeMismatch("glu: odd last dim " + shape_str(a.shape()));
  const auto c = c2 / 2;
  const auto& x = a.data();
  std::vector<double> out(static_cast<std::size_t>(r * c));
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      const double g = 1.0 / (1.0 + std::exp(-x[i * c2 + c + j]));
      out[i * c + j] = x[i * c2 + j] * g;
    }
  return make_result("glu", matrix_shape(r, c), std::move(out), {a}, [r, c, c2](Node& self) {
    auto* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& xv = self.parents[0]->value;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) {
        const double lin = xv[i * c2 + j];
        const double g = 1.0 / (1.0 + std::exp(-xv[i * c2 + c + j]));
        const double dy = self.grad[i * c + j];
        (*ga)[i * c2 + j] += dy * g;
        (*ga)[i * c2 + c + j] += dy * lin * g * (1.0 - g);
      }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  const auto r = a.rows(), c = a.cols();
  if (row.numel() != c) throw ShapeMismatch("add_row: " + shape_str(a.shape()) + " + " + shape_str(row.shape()));
  const auto& x = a.data();
  const auto& b = row.data();
  std::vector<double> out(x.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + b[j];
  return make_result("add_row", a.shape(), std::move(out), {a, row}, [r, c](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) (*g)[j] += self.grad[i * c + j];
  });
}

Tensor mul_row(const Tensor& a, const Tensor& row) {
  const auto r = a.rows(), c = a.cols();
  if (row.numel() != c) throw ShapeMismatch("mul_row: " + shape_str(a.shape()) + " * " + shape_str(row.shape()));
  const auto& x = a.data();
  const auto& b = row.data();
  std::vector<double> out(x.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * b[j];
  return make_result("mul_row", a.shape(), std::move(out), {a, row}, [r, c](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* g = parent_grad(self, 0))
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * c + j] * bv[j];
    if (auto* g = parent_grad(self, 1))
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) (*g)[j] += self.grad[i * c + j] * xv[i * c + j];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("sum", {1}, {s}, {a}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (auto& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const auto n = static_cast<double>(a.numel());
  if (n == 0) throw ShapeMismatch("mean of empty tensor");
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result("mean", {1}, {s / n}, {a}, [n](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (auto& v : *g) v += self.grad[0] / n;
  });
}

Tensor mean_rows(const Tensor& a) {
  const auto r = a.rows(), c = a.cols();
  if (r == 0) throw ShapeMismatch("mean_rows of empty tensor");
  const auto& x = a.data();
  std::vector<double> out(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[j] += x[i * c + j];
  for (auto& v : out) v /= static_cast<double>(r);
  return make_result("mean_rows", matrix_shape(1, c), std::move(out), {a}, [r, c](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[j] / static_cast<double>(r);
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape("mse", a, b);
  const auto n = static_cast<double>(a.numel());
  if (n == 0) throw ShapeMismatch("mse of empty tensors");
  const auto& x = a.data();
  const auto& y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return make_result("mse", {1}, {s / n}, {a, b}, [n](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& yv = self.parents[1]->value;
    const double k = 2.0 * self.grad[0] / n;
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += k * (xv[i] - yv[i]);
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= k * (xv[i] - yv[i]);
  });
}

Tensor softmax_rows(const Tensor& a, bool causal) {
  const auto r = a.rows(), c = a.cols();
  const auto& x = a.data();
  std::vector<double> out(x.size(), 0.0);
  for (std::int64_t i = 0; i < r; ++i) {
    const std::int64_t valid = causal ? std::min(c, i + 1) : c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < valid; ++j) mx = std::max(mx, x[i * c + j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < valid; ++j) {
      out[i * c + j] = std::exp(x[i * c + j] - mx);
      z += out[i * c + j];
    }
    for (std::int64_t j = 0; j < valid; ++j) out[i * c + j] /= z;
  }
  return make_result("softmax_rows", a.shape(), std::move(out), {a}, [r, c](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& y = self.value;
    for (std::int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::int64_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * y[i * c + j];
      for (std::int64_t j = 0; j < c; ++j) (*g)[i * c + j] += y[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  const auto r = a.rows(), c = a.cols();
  const auto& x = a.data();
  std::vector<double> out(x.size());
  for (std::int64_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) z += std::exp(x[i * c + j] - mx);
    const double lse = mx + std::log(z);
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] - lse;
  }
  return make_result("log_softmax_rows", a.shape(), std::move(out), {a}, [r, c](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::int64_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::int64_t j = 0; j < c; ++j) gs += self.grad[i * c + j];
      for (std::int64_t j = 0; j < c; ++j)
        (*g)[i * c + j] += self.grad[i * c + j] - std::exp(self.value[i * c + j]) * gs;
    }
  });
}

Tensor logsumexp_rows(const Tensor& a) {
  const auto r = a.rows(), c = a.cols();
  const auto& x = a.data();
  std::vector<double> out(static_cast<std::size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) z += std::exp(x[i * c + j] - mx);
    out[i] = mx + std::log(z);
  }
  return make_result("logsumexp_rows", matrix_shape(r, 1), std::move(out), {a}, [r, c](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    const auto& xv = self.parents[0]->value;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i] * std::exp(xv[i * c + j] - self.value[i]);
  });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require_same_shape("row_dot", a, b);
  const auto r = a.rows(), c = a.cols();
  const auto& x = a.data();
  const auto& y = b.data();
  std::vector<double> out(static_cast<std::size_t>(r), 0.0);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out[i] += x[i * c + j] * y[i * c + j];
  return make_result("row_dot", matrix_shape(r, 1), std::move(out), {a, b}, [r, c](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& yv = self.parents[1]->value;
    if (auto* g = parent_grad(self, 0))
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i] * yv[i * c + j];
    if (auto* g = parent_grad(self, 1))
      for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i] * xv[i * c + j];
  });
}

Tensor row_normalize(const Tensor& a, double eps) {
  const auto r = a.rows(), c = a.cols();
  const auto& x = a.data();
  std::vector<double> out(x.size());
  std::vector<double> norms(static_cast<std::size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) s += x[i * c + j] * x[i * c + j];
    norms[i] = std::max(std::sqrt(s), eps);
    for (std::int64_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] / norms[i];
  }
  return make_result("row_normalize", a.shape(), std::move(out), {a},
                     [r, c, eps, norms = std::move(norms)](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       const auto& xv = self.parents[0]->value;
                       for (std::int64_t i = 0; i < r; ++i) {
                         const double n = norms[i];
                         double raw = 0.0;
                         for (std::int64_t j = 0; j < c; ++j) raw += xv[i * c + j] * xv[i * c + j];
                         if (std::sqrt(raw) <= eps) {
                           for (std::int64_t j = 0; j < c; ++j) (*g)[i * c + j] += self.grad[i * c + j] / n;
                           continue;
                         }
                         double dot = 0.0;
                         for (std::int64_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.value[i * c + j];
                         for (std::int64_t j = 0; j < c; ++j)
                           (*g)[i * c + j] += (self.grad[i * c + j] - self.value[i * c + j] * dot) / n;
                       }
                     });
}

Tensor pick(const Tensor& a, std::span<const std::int64_t> idx) {
  const auto r = a.rows(), c = a.cols();
  if (static_cast<std::int64_t>(idx.size()) != r) throw ShapeMismatch("pick: one index per row required");
  std::vector<std::int64_t> ids(idx.begin(), idx.end());
  std::vector<double> out(static_cast<std::size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    if (ids[i] < 0 || ids[i] >= c) throw ShapeMismatch("pick: index out of range");
    out[i] = a.data()[i * c + ids[i]];
  }
  return make_result("pick", matrix_shape(r, 1), std::move(out), {a}, [c, ids = std::move(ids)](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < ids.size(); ++i) (*g)[i * c + ids[i]] += self.grad[i];
  });
}

Tensor sq_dist(const Tensor& a, const Tensor& b) {
  const auto m = a.rows(), k = b.rows(), d = a.cols();
  if (b.cols() != d) throw ShapeMismatch("sq_dist: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const auto& x = a.data();
  const auto& y = b.data();
  std::vector<double> out(static_cast<std::size_t>(m * k));
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < k; ++j) {
      double s = 0.0;
      for (std::int64_t t = 0; t < d; ++t) {
        const double diff = x[i * d + t] - y[j * d + t];
        s += diff * diff;
      }
      out[i * k + j] = s;
    }
  return make_result("sq_dist", matrix_shape(m, k), std::move(out), {a, b}, [m, k, d](Node& self) {
    const auto& xv = self.parents[0]->value;
    const auto& yv = self.parents[1]->value;
    auto* ga = parent_grad(self, 0);
    auto* gb = parent_grad(self, 1);
    for (std::int64_t i = 0; i < m; ++i)
      for (std::int64_t j = 0; j < k; ++j) {
        const double gij = 2.0 * self.grad[i * k + j];
        if (gij == 0.0) continue;
        for (std::int64_t t = 0; t < d; ++t) {
          const double diff = xv[i * d + t] - yv[j * d + t];
          if (ga) (*ga)[i * d + t] += gij * diff;
          if (gb) (*gb)[j * d + t] -= gij * diff;
        }
      }
  });
}

Tensor nll_rows(const Tensor& logits, std::span<const std::int64_t> targets, std::span<const std::uint8_t> mask) {
  const auto r = logits.rows(), c = logits.cols();
  if (static_cast<std::int64_t>(targets.size()) != r || static_cast<std::int64_t>(mask.size()) != r) {
    throw ShapeMismatch("nll_rows: " + std::to_string(targets.size()) + " targets for " + std::to_string(r) +
                        " rows");
  }
  std::vector<std::int64_t> tgt(targets.begin(), targets.end());
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  const auto& x = logits.data();
  std::vector<double> lse(static_cast<std::size_t>(r), 0.0);
  double total = 0.0;
  for (std::int64_t i = 0; i < r; ++i) {
    if (!msk[i]) continue;
    if (tgt[i] < 0 || tgt[i] >= c) throw ShapeMismatch("nll_rows: target id out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::int64_t j = 0; j < c; ++j) mx = std::max(mx, x[i * c + j]);
    double z = 0.0;
    for (std::int64_t j = 0; j < c; ++j) z += std::exp(x[i * c + j] - mx);
    lse[i] = mx + std::log(z);
    total += lse[i] - x[i * c + tgt[i]];
  }
  return make_result("nll_rows", {1}, {total}, {logits},
                     [r, c, tgt = std::move(tgt), msk = std::move(msk), lse = std::move(lse)](Node& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       const auto& xv = self.parents[0]->value;
                       const double dy = self.grad[0];
                       for (std::int64_t i = 0; i < r; ++i) {
                         if (!msk[i]) continue;
                         for (std::int64_t j = 0; j < c; ++j) (*g)[i * c + j] += dy * std::exp(xv[i * c + j] - lse[i]);
                         (*g)[i * c + tgt[i]] -= dy;
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const auto r = x.rows(), c = x.cols();
  if (gain.numel() != c || bias.numel() != c) {
    throw ShapeMismatch("layer_norm: width " + std::to_string(c) + " vs gain " + shape_str(gain.shape()));
  }
  const auto& xv = x.data();
  const auto& g = gain.data();
  const auto& b = bias.data();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(static_cast<std::size_t>(r));
  for (std::int64_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (std::int64_t j = 0; j < c; ++j) mu += xv[i * c + j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::int64_t j = 0; j < c; ++j) var += (xv[i * c + j] - mu) * (xv[i * c + j] - mu);
    var /= static_cast<double>(c);
    const double sd = std::sqrt(var + eps);
    inv_std[i] = sd > 0.0 ? 1.0 / sd : 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xv[i * c + j] - mu) * inv_std[i];
      out[i * c + j] = g[j] * xhat[i * c + j] + b[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.parents[1]->value;
        auto* gx = parent_grad(self, 0);
        auto* gg = parent_grad(self, 1);
        auto* gb = parent_grad(self, 2);
        for (std::int64_t i = 0; i < r; ++i) {
          double mean_d = 0.0, mean_dx = 0.0;
          for (std::int64_t j = 0; j < c; ++j) {
            const double dy = self.grad[i * c + j];
            if (gg) (*gg)[j] += dy * xhat[i * c + j];
            if (gb) (*gb)[j] += dy;
            const double dxh = dy * gv[j];
            mean_d += dxh;
            mean_dx += dxh * xhat[i * c + j];
          }
          if (!gx) continue;
          mean_d /= static_cast<double>(c);
          mean_dx /= static_cast<double>(c);
          for (std::int64_t j = 0; j < c; ++j) {
            const double dxh = self.grad[i * c + j] * gv[j];
            (*gx)[i * c + j] += inv_std[i] * (dxh - mean_d - xhat[i * c + j] * mean_dx);
          }
        }
      });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  std::vector<double>* batch_mean, std::vector<double>* batch_var) {
  const auto r = x.rows(), c = x.cols();
  if (gamma.numel() != c || beta.numel() != c) throw ShapeMismatch("batch_norm: channel count mismatch");
  if (r == 0) throw ShapeMismatch("batch_norm of empty batch");
  const auto& xv = x.data();
  const auto& g = gamma.data();
  const auto& b = beta.data();
  std::vector<double> mu(static_cast<std::size_t>(c), 0.0), var(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) mu[j] += xv[i * c + j];
  for (auto& m : mu) m /= static_cast<double>(r);
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) var[j] += (xv[i * c + j] - mu[j]) * (xv[i * c + j] - mu[j]);
  for (auto& v : var) v /= static_cast<double>(r);
  std::vector<double> inv_std(static_cast<std::size_t>(c));
  for (std::int64_t j = 0; j < c; ++j) {
    const double sd = std::sqrt(var[j] + eps);
    inv_std[j] = sd > 0.0 ? 1.0 / sd : 0.0;
  }
  std::vector<double> xhat(xv.size()), out(xv.size());
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xv[i * c + j] - mu[j]) * inv_std[j];
      out[i * c + j] = g[j] * xhat[i * c + j] + b[j];
    }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  return make_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma, beta},
      [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        const auto& gv = self.parents[1]->value;
        auto* gx = parent_grad(self, 0);
        auto* gg = parent_grad(self, 1);
        auto* gb = parent_grad(self, 2);
        std::vector<double> mean_d(static_cast<std::size_t>(c), 0.0), mean_dx(static_cast<std::size_t>(c), 0.0);
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < c; ++j) {
            const double dy = self.grad[i * c + j];
            if (gg) (*gg)[j] += dy * xhat[i * c + j];
            if (gb) (*gb)[j] += dy;
            mean_d[j] += dy * gv[j];
            mean_dx[j] += dy * gv[j] * xhat[i * c + j];
          }
        if (!gx) return;
        for (std::int64_t j = 0; j < c; ++j) {
          mean_d[j] /= static_cast<double>(r);
          mean_dx[j] /= static_cast<double>(r);
        }
        for (std::int64_t i = 0; i < r; ++i)
          for (std::int64_t j = 0; j < c; ++j) {
            const double dxh = self.grad[i * c + j] * gv[j];
            (*gx)[i * c + j] += inv_std[j] * (dxh - mean_d[j] - xhat[i * c + j] * mean_dx[j]);
          }
      });
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel) {
  const auto len = x.rows(), ch = x.cols(), k = kernel.rows();
  if (kernel.cols() != ch) {
    throw ShapeMismatch("depthwise_conv1d: input " + shape_str(x.shape()) + " kernel " + shape_str(kernel.shape()));
  }
  if (k % 2 == 0) throw ShapeMismatch("depthwise_conv1d: kernel length must be odd");
  const auto pad = k / 2;
  const auto& xv = x.data();
  const auto& kv = kernel.data();
  std::vector<double> out(xv.size(), 0.0);
  for (std::int64_t t = 0; t < len; ++t)
    for (std::int64_t j = 0; j < k; ++j) {
      const auto src = t + j - pad;
      if (src < 0 || src >= len) continue;
      for (std::int64_t c = 0; c < ch; ++c) out[t * ch + c] += xv[src * ch + c] * kv[j * ch + c];
    }
  return make_result("depthwise_conv1d", x.shape(), std::move(out), {x, kernel}, [len, ch, k, pad](Node& self) {
    const auto& xs = self.parents[0]->value;
    const auto& ks = self.parents[1]->value;
    auto* gx = parent_grad(self, 0);
    auto* gk = parent_grad(self, 1);
    for (std::int64_t t = 0; t < len; ++t)
      for (std::int64_t j = 0; j < k; ++j) {
        const auto src = t + j - pad;
        if (src < 0 || src >= len) continue;
        for (std::int64_t c = 0; c < ch; ++c) {
          const double dy = self.grad[t * ch + c];
          if (gx) (*gx)[src * ch + c] += dy * ks[j * ch + c];
          if (gk) (*gk)[j * ch + c] += dy * xs[src * ch + c];
        }
      }
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeMismatch("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  return make_result("reshape", shape, a.to_vector(), {a}, [](Node& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor slice_rows(const Tensor& a, std::int64_t start, std::int64_t count) {
  const auto r = a.rows(), c = a.cols();
  if (start < 0 || count < 0 || start + count > r) {
    throw ShapeMismatch("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                        shape_str(a.shape()));
  }
  const auto& x = a.data();
  std::vector<double> out(x.begin() + start * c, x.begin() + (start + count) * c);
  return make_result("slice_rows", matrix_shape(count, c), std::move(out), {a}, [start, c](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[start * c + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t count) {
  const auto r = a.rows(), c = a.cols();
  if (start < 0 || count < 0 || start + count > c) {
    throw ShapeMismatch("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                        shape_str(a.shape()));
  }
  const auto& x = a.data();
  std::vector<double> out(static_cast<std::size_t>(r * count));
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < count; ++j) out[i * count + j] = x[i * c + start + j];
  return make_result("slice_cols", matrix_shape(r, count), std::move(out), {a}, [r, c, start, count](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < count; ++j) (*g)[i * c + start + j] += self.grad[i * count + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_rows of nothing");
  const auto c = parts.front().cols();
  std::int64_t total = 0;
  std::vector<double> out;
  std::vector<std::int64_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeMismatch("concat_rows: width " + std::to_string(p.cols()) + " vs " + std::to_string(c));
    offsets.push_back(static_cast<std::int64_t>(out.size()));
    out.insert(out.end(), p.data().begin(), p.data().end());
    total += p.rows();
  }
  return make_result("concat_rows", matrix_shape(total, c), std::move(out), parts,
                     [offsets = std::move(offsets)](Node& self) {
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         auto* g = parent_grad(self, p);
                         if (!g) continue;
                         for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[offsets[p] + i];
                       }
                     });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols of nothing");
  const auto r = parts.front().rows();
  std::vector<std::int64_t> widths;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) throw ShapeMismatch("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(r * total));
  std::int64_t off = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& x = parts[p].data();
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < widths[p]; ++j) out[i * total + off + j] = x[i * widths[p] + j];
    off += widths[p];
  }
  return make_result("concat_cols", matrix_shape(r, total), std::move(out), parts,
                     [r, total, widths = std::move(widths)](Node& self) {
                       std::int64_t o = 0;
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         if (auto* g = parent_grad(self, p))
                           for (std::int64_t i = 0; i < r; ++i)
                             for (std::int64_t j = 0; j < widths[p]; ++j)
                               (*g)[i * widths[p] + j] += self.grad[i * total + o + j];
                         o += widths[p];
                       }
                     });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids) {
  const auto v = table.rows(), d = table.cols();
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  std::vector<double> out(idx.size() * static_cast<std::size_t>(d));
  const auto& t = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= v) {
      throw ShapeMismatch("gather_rows: id " + std::to_string(idx[i]) + " outside table of " + std::to_string(v));
    }
    std::copy(t.begin() + idx[i] * d, t.begin() + (idx[i] + 1) * d, out.begin() + static_cast<std::int64_t>(i) * d);
  }
  const auto n = static_cast<std::int64_t>(idx.size());
  return make_result("gather_rows", matrix_shape(n, d), std::move(out), {table}, [d, idx = std::move(idx)](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::int64_t j = 0; j < d; ++j) (*g)[idx[i] * d + j] += self.grad[i * d + j];
  });
}

Tensor stop_gradient(const Tensor& a) {
  return make_result("stop_gradient", a.shape(), a.to_vector(), {}, nullptr);
}

Tensor straight_through(const Tensor& through, const Tensor& value) {
  require_same_shape("straight_through", through, value);
  return make_result("straight_through", through.shape(), value.to_vector(), {through}, [](Node& self) {
    auto* g = parent_grad(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor dropout(const Tensor& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) return scale(a, 0.0);
  const double keep = 1.0 / (1.0 - p);
  std::vector<double> m(static_cast<std::size_t>(a.numel()));
  for (auto& v : m) v = rng.uniform() < p ? 0.0 : keep;
  return mul(a, Tensor::from(a.shape(), std::move(m)));
}

}  // namespace belt2
