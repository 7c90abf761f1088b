#include "belt2/objectives/objectives.hpp"

#include <cmath>
#include <numeric>

#include "belt2/error.hpp"
#include "belt2/numcore/ops.hpp"

namespace belt2 {

namespace {

// [A*n x 1] scores of anchor i against its n rows, reshaped to [A x n].
Tensor grouped_scores(const Tensor& anchors, const Tensor& others, std::int64_t n) {
  const auto A = anchors.rows();
  std::vector<std::int64_t> rep(static_cast<std::size_t>(A * n));
  for (std::int64_t i = 0; i < A * n; ++i) rep[i] = i / n;
  return reshape(row_dot(gather_rows(anchors, rep), others), {A, n});
}

void check_contrastive(const char* name, const Tensor& anchors, const Tensor& negatives, std::int64_t n_neg) {
  if (n_neg < 1) throw NoNegatives(std::string(name) + " needs at least one negative per anchor");
  if (negatives.rows() != anchors.rows() * n_neg || negatives.cols() != anchors.cols()) {
    throw ShapeMismatch(std::string(name) + ": negatives " + shape_str(negatives.shape()) + " for anchors " +
                        shape_str(anchors.shape()) + " with n_neg " + std::to_string(n_neg));
  }
}

}  // namespace

VqLoss vq_loss(const Tensor& h, const Tensor& codes, const Tensor& usage, const Tensor& e, const Tensor& e_hat,
               const std::array<double, 4>& term_weights) {
  VqLoss l;
  l.codebook = mse(stop_gradient(h), codes);
  l.commitment = mse(h, stop_gradient(codes));
  l.entropy = scale(sum(mul(usage, log(usage, kLogEps))), 1.0 / static_cast<double>(usage.numel()));
  l.recon = mse(e, e_hat);
  const auto& w = term_weights;
  l.total = add(add(scale(l.codebook, w[0]), scale(l.commitment, w[1])), add(scale(l.entropy, w[2]), scale(l.recon, w[3])));
  return l;
}

Tensor bpe_cl_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives, std::int64_t n_neg,
                   bool normalize) {
  check_contrastive("bpe_cl_loss", anchors, negatives, n_neg);
  if (positives.rows() != anchors.rows() || positives.cols() != anchors.cols()) {
    throw ShapeMismatch("bpe_cl_loss: positives " + shape_str(positives.shape()) + " for anchors " +
                        shape_str(anchors.shape()));
  }
  const Tensor a = normalize ? row_normalize(anchors) : anchors;
  const Tensor p = normalize ? row_normalize(positives) : positives;
  const Tensor n = normalize ? row_normalize(negatives) : negatives;
  const Tensor pos = row_dot(a, p);
  const Tensor logits = concat_cols({pos, grouped_scores(a, n, n_neg)});
  return mean(sub(logsumexp_rows(logits), pos));
}

Tensor ncl_loss(const Tensor& anchors, const Tensor& negatives, std::int64_t n_neg, bool normalize) {
  check_contrastive("ncl_loss", anchors, negatives, n_neg);
  const Tensor a = normalize ? row_normalize(anchors) : anchors;
  const Tensor n = normalize ? row_normalize(negatives) : negatives;
  return mean(logsumexp_rows(grouped_scores(a, n, n_neg)));
}

Tensor seq2seq_nll(const Tensor& logits, std::span<const std::int64_t> targets, std::span<const std::uint8_t> mask) {
  if (logits.rows() != static_cast<std::int64_t>(targets.size())) {
    throw ShapeMismatch("seq2seq_nll: " + std::to_string(logits.rows()) + " logit rows for " +
                        std::to_string(targets.size()) + " targets");
  }
  if (mask.empty()) {
    std::vector<std::uint8_t> all(targets.size(), 1);
    return nll_rows(logits, targets, all);
  }
  if (mask.size() != targets.size()) throw ShapeMismatch("seq2seq_nll: mask length differs from targets");
  return nll_rows(logits, targets, mask);
}

Tensor sentiment_loss(const Tensor& probs, int c) {
  const auto& p = probs.data();
  double total = 0.0;
  for (double v : p) {
    if (!(v >= -1e-12)) throw InvalidDistribution("negative or NaN probability");
    total += v;
  }
  if (p.empty() || std::abs(total - 1.0) > 1e-6) throw InvalidDistribution("probabilities sum to " + std::to_string(total));
  if (c < 0 || c >= static_cast<int>(p.size())) {
    throw InvalidDistribution("class " + std::to_string(c) + " outside " + std::to_string(p.size()) + " classes");
  }
  const std::int64_t idx = c;
  const Tensor row = reshape(probs, {1, static_cast<std::int64_t>(p.size())});
  return scale(sum(log(pick(row, std::span<const std::int64_t>(&idx, 1)), kLogEps)), -1.0);
}

Tensor stage1_total(const Stage1Components& c, const LossWeights& w) {
  const auto parts = c.as_array();
  const auto ws = w.as_array();
  Tensor total;
  for (std::size_t i = 0; i < 4; ++i) {
    if (!parts[i].defined()) continue;
    if (!std::isfinite(parts[i].item())) throw NonFinite("stage-1 loss component " + std::to_string(i) + " is not finite");
    const Tensor term = scale(parts[i], ws[i]);
    total = total.defined() ? add(total, term) : term;
  }
  return total.defined() ? total : Tensor::scalar(0.0);
}

std::array<double, 4> stage1_backward(const Stage1Components& c, const LossWeights& w,
                                      const std::vector<Tensor>& params) {
  std::array<double, 4> norms{0, 0, 0, 0};
  if (!w.grad_norm) {
    backward(stage1_total(c, w));
    return norms;
  }
  const auto parts = c.as_array();
  const auto ws = w.as_array();
  const std::size_t P = params.size();
  std::array<std::vector<std::vector<double>>, 4> grads;
  std::array<std::vector<bool>, 4> has;
  std::vector<int> users(P, 0);
  for (std::size_t i = 0; i < 4; ++i) {
    if (!parts[i].defined() || ws[i] == 0.0 || !parts[i].requires_grad()) continue;
    if (!std::isfinite(parts[i].item())) throw NonFinite("stage-1 loss component " + std::to_string(i) + " is not finite");
    for (auto t : params) t.zero_grad();
    backward(parts[i]);
    grads[i].resize(P);
    has[i].assign(P, false);
    for (std::size_t k = 0; k < P; ++k) {
      if (!params[k].has_grad()) continue;
      const auto g = params[k].grad();
      grads[i][k].assign(g.begin(), g.end());
      has[i][k] = true;
      ++users[k];
    }
  }

  std::vector<std::vector<double>> acc(P);
  for (std::size_t i = 0; i < 4; ++i) {
    if (grads[i].empty()) continue;
    double shared = 0.0, all = 0.0;
    for (std::size_t k = 0; k < P; ++k) {
      if (!has[i][k]) continue;
      double sq = 0.0;
      for (double v : grads[i][k]) sq += v * v;
      all += sq;
      if (users[k] > 1) shared += sq;
    }
    norms[i] = std::sqrt(shared > 0.0 ? shared : all);
    if (norms[i] == 0.0) continue;
    const double f = ws[i] / norms[i];
    for (std::size_t k = 0; k < P; ++k) {
      if (!has[i][k]) continue;
      if (acc[k].empty()) acc[k].assign(grads[i][k].size(), 0.0);
      for (std::size_t j = 0; j < acc[k].size(); ++j) acc[k][j] += f * grads[i][k][j];
    }
  }
  for (std::size_t k = 0; k < P; ++k) {
    Tensor t = params[k];
    t.zero_grad();
    if (acc[k].empty()) continue;
    auto& g = t.grad_buffer();
    for (std::size_t j = 0; j < g.size(); ++j) g[j] = acc[k][j];
  }
  return norms;
}

TaskSampler::TaskSampler(std::vector<std::string> tasks, std::uint64_t seed)
    : tasks_(std::move(tasks)), rng_(Rng(seed).fork("task-sampler")) {
  if (tasks_.empty()) throw ConfigError("task sampler needs at least one task");
}

const std::string& TaskSampler::next() { return tasks_[rng_.uniform_int(tasks_.size())]; }

}  // namespace belt2
