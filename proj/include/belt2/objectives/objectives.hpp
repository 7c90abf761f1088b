#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "belt2/numcore/rng.hpp"
#include "belt2/numcore/tensor.hpp"

namespace belt2 {

inline constexpr double kLogEps = 1e-9;

struct VqLoss {
  Tensor total;
  Tensor codebook;    // mse(sg[h], z_q)
  Tensor commitment;  // mse(h, sg[z_q])
  Tensor entropy;     // (1/|V|) sum_k p_k log p_k, <= 0
  Tensor recon;       // mse(e, ê)
};

/// Squared terms are means over elements. `codes` must carry the codebook
/// gradient (not the straight-through output). `usage` is p_k [|V|].
/// `term_weights` scale (codebook, commitment, entropy, recon) in the total.
VqLoss vq_loss(const Tensor& h, const Tensor& codes, const Tensor& usage, const Tensor& e, const Tensor& e_hat,
               const std::array<double, 4>& term_weights = {1.0, 1.0, 1.0, 1.0});

/// -log(exp(a.w+) / (exp(a.w+) + sum exp(a.w-))), mean over anchors.
/// anchors, positives: [A x d]; negatives: [A*n_neg x d], anchor i owning rows
/// [i*n_neg, (i+1)*n_neg). Rows are unit-normalized first unless
/// `normalize` is false. Throws NoNegatives, ShapeMismatch.
Tensor bpe_cl_loss(const Tensor& anchors, const Tensor& positives, const Tensor& negatives, std::int64_t n_neg,
                   bool normalize = true);

/// log sum_i exp(a.z-_i) per anchor, mean over anchors. Same layout as above.
Tensor ncl_loss(const Tensor& anchors, const Tensor& negatives, std::int64_t n_neg, bool normalize = true);

/// Teacher-forced token NLL summed over positions with mask != 0 (all
/// positions when mask is empty). Throws ShapeMismatch.
Tensor seq2seq_nll(const Tensor& logits, std::span<const std::int64_t> targets,
                   std::span<const std::uint8_t> mask = {});

/// -log p[c] with the probability clamped at 1e-9. Throws
/// InvalidDistribution when probs is not a distribution.
Tensor sentiment_loss(const Tensor& probs, int c);

struct LossWeights {
  double vq = 1.0;
  double bpe = 10.0;
  double elm = 10.0;
  double neg = 0.001;
  bool grad_norm = true;

  std::array<double, 4> as_array() const { return {vq, bpe, elm, neg}; }
};

/// Stage-1 loss components in (vq, bpe, elm, neg) order.
struct Stage1Components {
  Tensor vq, bpe, elm, neg;

  std::array<Tensor, 4> as_array() const { return {vq, bpe, elm, neg}; }
};

/// Weighted sum of the components. Throws NonFinite on a non-finite component.
Tensor stage1_total(const Stage1Components& c, const LossWeights& w);

/// Accumulates the stage-1 gradient into `params`. Without grad_norm this is
/// backward(stage1_total). With grad_norm each component is backpropagated on
/// its own and its whole gradient divided by its L2 norm over the shared
/// parameters (those reached by more than one component; all of its
/// parameters when it shares none), then multiplied by its weight and summed.
/// Returns the normalizing norm of each component (0 for skipped ones).
std::array<double, 4> stage1_backward(const Stage1Components& c, const LossWeights& w,
                                      const std::vector<Tensor>& params);

/// Uniform seeded draw of one task per batch.
class TaskSampler {
 public:
  TaskSampler(std::vector<std::string> tasks, std::uint64_t seed);
  const std::string& next();
  const std::vector<std::string>& tasks() const { return tasks_; }

 private:
  std::vector<std::string> tasks_;
  Rng rng_;
};

}  // namespace belt2
