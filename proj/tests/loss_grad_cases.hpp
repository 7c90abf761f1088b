#pragma once

#include "belt2/objectives/objectives.hpp"
#include "grad_cases.hpp"

namespace belt2::testing {

/// Random inputs with dims <= 8 and one case per loss. The stop-gradient
/// terms of vq_loss are checked against the parameter they train.
class LossGradCases {
 public:
  explicit LossGradCases(std::uint64_t seed) : rng_(seed) {
    A_ = 1 + static_cast<std::int64_t>(rng_.uniform_int(4));
    d_ = 2 + static_cast<std::int64_t>(rng_.uniform_int(6));
    K_ = 1 + static_cast<std::int64_t>(rng_.uniform_int(3));
    V_ = 2 + static_cast<std::int64_t>(rng_.uniform_int(5));
    a_ = random_tensor({A_, d_}, rng_);
    p_ = random_tensor({A_, d_}, rng_);
    n_ = random_tensor({A_ * K_, d_}, rng_);
    logits_ = random_tensor({A_ + 1, d_}, rng_);
    cls_ = random_tensor({1, 3}, rng_);
    codebook_ = random_tensor({V_, d_}, rng_);
    usage_logits_ = random_tensor({1, V_}, rng_);
    e_ = random_tensor({A_, d_}, rng_, 1.0, false);
    targets_.resize(static_cast<std::size_t>(A_ + 1));
    for (auto& t : targets_) t = static_cast<std::int64_t>(rng_.uniform_int(static_cast<std::uint64_t>(d_)));
    mask_.assign(targets_.size(), 1);
    mask_.back() = 0;
    codes_.resize(static_cast<std::size_t>(A_));
    for (auto& c : codes_) c = static_cast<std::int64_t>(rng_.uniform_int(static_cast<std::uint64_t>(V_)));
    label_ = static_cast<int>(rng_.uniform_int(3));
  }

  std::vector<GradCase> cases() const {
    const Tensor a = a_, p = p_, n = n_, logits = logits_, cls = cls_, codebook = codebook_, ul = usage_logits_, e = e_;
    const auto K = K_, V = V_;
    const auto targets = targets_;
    const auto mask = mask_;
    const auto codes = codes_;
    const int label = label_;
    auto vq = [=] {
      const Tensor usage = reshape(softmax_rows(ul), {V});
      return vq_loss(a, gather_rows(codebook, codes), usage, e, mul(p, p));
    };
    return {
        {"vq_codebook", [=] { return vq().codebook; }, {codebook}},
        {"vq_commitment", [=] { return vq().commitment; }, {a}},
        {"vq_entropy", [=] { return vq().entropy; }, {ul}},
        {"vq_recon", [=] { return vq().recon; }, {p}},
        {"bpe_cl", [=] { return bpe_cl_loss(a, p, n, K); }, {a, p, n}},
        {"bpe_cl_raw", [=] { return bpe_cl_loss(a, p, n, K, false); }, {a, p, n}},
        {"ncl", [=] { return ncl_loss(a, n, K); }, {a, n}},
        {"seq2seq", [=] { return seq2seq_nll(logits, targets, mask); }, {logits}},
        {"sentiment", [=] { return sentiment_loss(softmax_rows(cls), label); }, {cls}},
        {"stage1_total",
         [=] {
           const auto l = vq();
           return stage1_total({add(l.entropy, l.recon), bpe_cl_loss(a, p, n, K), sum(p), ncl_loss(a, n, K)}, {});
         },
         {a, p, n, ul}},
        {"multitask_sum",
         [=] { return add(seq2seq_nll(logits, targets, mask), sentiment_loss(softmax_rows(cls), label)); },
         {logits, cls}},
    };
  }

 private:
  Rng rng_;
  std::int64_t A_, d_, K_, V_;
  Tensor a_, p_, n_, logits_, cls_, codebook_, usage_logits_, e_;
  std::vector<std::int64_t> targets_, codes_;
  std::vector<std::uint8_t> mask_;
  int label_;
};

}  // namespace belt2::testing
