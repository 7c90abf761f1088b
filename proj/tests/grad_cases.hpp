#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "belt2/numcore/gradcheck.hpp"
#include "belt2/numcore/ops.hpp"
#include "test_util.hpp"

namespace belt2::testing {

struct GradCase {
  std::string name;
  std::function<Tensor()> f;
  std::vector<Tensor> params;
};

/// Random inputs with dims <= 8 and one case per differentiable primitive.
class PrimitiveGradCases {
 public:
  explicit PrimitiveGradCases(std::uint64_t seed) : rng_(seed) {
    r_ = 2 + static_cast<std::int64_t>(rng_.uniform_int(5));
    c_ = 2 + static_cast<std::int64_t>(rng_.uniform_int(6));
    a_ = random_tensor({r_, c_}, rng_);
    b_ = random_tensor({r_, c_}, rng_);
    m_ = random_tensor({c_, 3}, rng_);
    row_ = random_tensor({c_}, rng_);
    gain_ = random_tensor({c_}, rng_);
    bias_ = random_tensor({c_}, rng_);
    kernel_ = random_tensor({3, c_}, rng_);
    weights_ = random_tensor({r_, c_}, rng_, 1.0, false);
    pos_ = random_tensor({r_, c_}, rng_);
    for (auto& v : pos_.mutable_data()) v = 0.5 + rng_.uniform();
    ids_.resize(static_cast<std::size_t>(r_));
    for (auto& i : ids_) i = static_cast<std::int64_t>(rng_.uniform_int(static_cast<std::uint64_t>(c_)));
    mask_.assign(static_cast<std::size_t>(r_), 1);
    mask_[0] = 0;
    table_ = random_tensor({c_ + 1, 4}, rng_);
    gather_ids_ = {0, c_, 1, 0};
    drop_seed_ = rng_.next_u64();
  }

  std::vector<GradCase> cases() const {
    const Tensor a = a_, b = b_, m = m_, row = row_, gain = gain_, bias = bias_, kernel = kernel_, pos = pos_;
    const Tensor table = table_, weights = weights_;
    const auto ids = ids_, gather_ids = gather_ids_;
    const auto mask = mask_;
    const auto r = r_;
    const auto drop_seed = drop_seed_;
    auto wsum = [weights](const Tensor& t) { return sum(mul(t, weights)); };
    return {
        {"matmul", [=] { return sum(square(matmul(a, m))); }, {a, m}},
        {"transpose", [=] { return sum(matmul(transpose(a), b)); }, {a, b}},
        {"add_sub_mul", [=] { return wsum(mul(add(a, b), sub(a, b))); }, {a, b}},
        {"scale_shift_square", [=] { return sum(square(add_scalar(scale(a, 1.7), -0.3))); }, {a}},
        {"exp_log", [=] { return wsum(add(exp(scale(a, 0.3)), log(pos))); }, {a, pos}},
        {"sigmoid_silu_gelu", [=] { return wsum(add(add(sigmoid(a), silu(b)), gelu(a))); }, {a, b}},
        {"glu", [=] { return sum(square(glu(concat_cols({a, b})))); }, {a, b}},
        {"row_broadcast", [=] { return wsum(mul_row(add_row(a, row), gain)); }, {a, row, gain}},
        {"reductions", [=] { return add(mul(mean(a), sum(b)), sum(square(mean_rows(a)))); }, {a, b}},
        {"mse", [=] { return mse(a, b); }, {a, b}},
        {"softmax", [=] { return wsum(softmax_rows(a)); }, {a}},
        {"softmax_causal",
         [=] { return sum(mul(softmax_rows(matmul(a, transpose(a)), true), matmul(b, transpose(b)))); },
         {a, b}},
        {"log_softmax", [=] { return wsum(log_softmax_rows(a)); }, {a}},
        {"logsumexp", [=] { return sum(square(logsumexp_rows(a))); }, {a}},
        {"row_dot", [=] { return sum(square(row_dot(a, b))); }, {a, b}},
        {"row_normalize", [=] { return wsum(row_normalize(a)); }, {a}},
        {"pick", [=] { return sum(square(pick(a, ids))); }, {a}},
        {"sq_dist", [=] { return sum(square(sq_dist(a, slice_rows(b, 0, 1)))); }, {a, b}},
        {"nll_rows", [=] { return nll_rows(a, ids, mask); }, {a}},
        {"layer_norm",
         [=] { return sum(mul(layer_norm(concat_cols({a, b}), concat_cols({gain, gain}), concat_cols({bias, bias})), concat_cols({weights, square(weights)}))); },
         {a, b, gain, bias}},
        {"batch_norm",
         [=] { return sum(mul(batch_norm(concat_rows({a, b}), gain, bias, 1e-5), concat_rows({weights, square(weights)}))); },
         {a, b, gain, bias}},
        {"depthwise_conv1d", [=] { return wsum(depthwise_conv1d(a, kernel)); }, {a, kernel}},
        {"slices_concat",
         [=] {
           auto top = slice_rows(a, 0, 1);
           auto left = slice_cols(b, 0, 1);
           return sum(square(concat_cols({concat_rows({top, slice_rows(a, r - 1, 1)}),
                                          concat_rows({slice_rows(left, 0, 1), slice_rows(left, r - 1, 1)})})));
         },
         {a, b}},
        {"gather_reshape", [=] { return sum(square(reshape(gather_rows(table, gather_ids), {16}))); }, {table}},
        {"stop_gradient", [=] { return sum(mul(square(stop_gradient(a)), b)); }, {b}},
        {"dropout",
         [=] {
           Rng d(drop_seed);
           return wsum(square(dropout(a, 0.3, d)));
         },
         {a}},
    };
  }

 private:
  Rng rng_;
  std::int64_t r_, c_;
  Tensor a_, b_, m_, row_, gain_, bias_, kernel_, weights_, pos_, table_;
  std::vector<std::int64_t> ids_, gather_ids_;
  std::vector<std::uint8_t> mask_;
  std::uint64_t drop_seed_;
};

}  // namespace belt2::testing
