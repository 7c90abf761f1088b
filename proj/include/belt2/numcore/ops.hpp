#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "belt2/numcore/rng.hpp"
#include "belt2/numcore/tensor.hpp"

// Differentiable primitives. Matrix ops read a tensor as rows() x cols(),
// i.e. every leading dimension is folded into rows.
namespace belt2 {

// Linear algebra
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log of max(a, eps); the gradient is zero where the clamp is active.
Tensor log(const Tensor& a, double eps = 1e-9);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline constexpr double kGeluCubic = 0.044715;
Tensor gelu(const Tensor& a);

/// Gated linear unit over the last dim: a[:, :n] * sigmoid(a[:, n:]).
Tensor glu(const Tensor& a);

// Broadcasting over rows
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul_row(const Tensor& a, const Tensor& row);

// Reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Column means, shape [1 x cols].
Tensor mean_rows(const Tensor& a);
/// Mean of squared differences over all elements.
Tensor mse(const Tensor& a, const Tensor& b);

// Row-wise
Tensor softmax_rows(const Tensor& a, bool causal = false);
Tensor log_softmax_rows(const Tensor& a);
/// [rows x 1]
Tensor logsumexp_rows(const Tensor& a);
/// [rows x 1] dot products of matching rows.
Tensor row_dot(const Tensor& a, const Tensor& b);
/// Scales each row to unit L2 norm (norm clamped below by eps).
Tensor row_normalize(const Tensor& a, double eps = 1e-12);
/// [rows x 1] element a[r, idx[r]].
Tensor pick(const Tensor& a, std::span<const std::int64_t> idx);
/// Squared Euclidean distances, [rows(a) x rows(b)].
Tensor sq_dist(const Tensor& a, const Tensor& b);

/// Sum over rows r with mask[r] != 0 of -log_softmax(logits)[r, target[r]].
Tensor nll_rows(const Tensor& logits, std::span<const std::int64_t> targets,
                std::span<const std::uint8_t> mask);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Batch normalization with batch statistics: each column is normalized over
/// the rows, then scaled by gamma and shifted by beta. The batch mean and the
/// biased variance are written to the optional outputs.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  std::vector<double>* batch_mean = nullptr, std::vector<double>* batch_var = nullptr);

/// Per-channel convolution of x [L x C] with kernel [k x C], zero padding so
/// that length is preserved (k odd): y[t,c] = sum_j x[t + j - k/2, c] k[j, c].
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel);

// Structure
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor slice_rows(const Tensor& a, std::int64_t start, std::int64_t count);
Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Rows of `table` selected by ids (embedding lookup); gradient scatter-adds.
Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> ids);

/// sg[x]: identity forward, no gradient backward.
Tensor stop_gradient(const Tensor& a);

/// Straight-through estimator: forward returns `value` exactly, backward sends
/// the incoming gradient to `through` unchanged and nothing to `value`.
Tensor straight_through(const Tensor& through, const Tensor& value);

/// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

}  // namespace belt2
