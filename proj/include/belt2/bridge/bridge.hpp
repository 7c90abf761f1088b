#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "belt2/data/sample.hpp"
#include "belt2/decoderlm/decoderlm.hpp"
#include "belt2/numcore/optim.hpp"
#include "belt2/qconformer/qconformer.hpp"

namespace belt2 {

/// Learnable prefix θ [P x d_lm] plus an optional linear adapter d_q -> d_lm.
struct VirtualPrefix {
  ParameterSet ps;
  Tensor theta;
  std::optional<Linear> adapter;

  /// adapter: "identity" (requires d_q == d_lm), "linear", or "auto"
  /// (linear only when widths differ). Throws ConfigError.
  static VirtualPrefix create(std::int64_t prefix_len, std::int64_t d_q, std::int64_t d_lm, const std::string& adapter,
                              std::uint64_t seed);
  /// [θ ; adapter(mlc)], prefix rows first.
  Tensor conditioning(const Tensor& mlc) const;
  std::int64_t length() const { return theta.rows(); }
};

struct MlcEntry {
  std::string checkpoint;
  std::string sample;
  std::string task;
  Tensor value;  // [n_q x d_q]
};

/// MLCs of every (checkpoint, sample) pair for one task.
class MlcCache {
 public:
  const std::string& best() const { return best_; }
  const std::vector<std::string>& suboptimal() const { return suboptimal_; }
  std::size_t size() const { return entries_.size(); }
  /// Number of distinct MLC values (exact bytes) in the pool.
  std::size_t unique_values() const;
  std::vector<std::string> checkpoints() const;
  std::vector<std::string> samples() const;
  bool contains_sample(const std::string& sample) const { return samples_.contains(sample); }

  void insert(MlcEntry e);
  /// Throws UnknownSample.
  const Tensor& get(const std::string& checkpoint, const std::string& sample) const;

  void set_roles(std::string best, std::vector<std::string> suboptimal);
  const std::string& task() const { return task_; }
  void set_task(std::string t) { task_ = std::move(t); }

  /// <stem>.bin (float32 blocks) + <stem>.json {best, suboptimal, task,
  /// entries: [{ckpt, sample, task, offset, rows, cols}]}.
  void save(const std::filesystem::path& stem) const;
  static MlcCache load(const std::filesystem::path& stem);

 private:
  std::string best_;
  std::vector<std::string> suboptimal_;
  std::string task_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
  std::map<std::string, int> samples_;
  std::vector<MlcEntry> entries_;
};

struct CheckpointRef {
  std::string id;
  std::filesystem::path dir;
};

/// Evaluates every checkpoint on every sample in eval mode. `best` must be
/// one of `checkpoints`, otherwise MissingBest.
MlcCache cache_mlc(const std::vector<CheckpointRef>& checkpoints, const std::string& best,
                   const std::vector<EegSample>& samples, const std::string& task, const BpeVocab& vocab);

/// Same, for models already in memory (id -> model).
MlcCache cache_mlc(const std::vector<std::pair<std::string, const QConformer*>>& models, const std::string& best,
                   const std::vector<EegSample>& samples, const std::string& task);

/// With probability 1 - r the best checkpoint's MLC, otherwise one of the
/// suboptimal checkpoints' MLC chosen uniformly. Throws UnknownSample,
/// ConfigError (r outside [0, 1], or r > 0 with no suboptimal checkpoints).
const Tensor& speculative_sample(const MlcCache& cache, const std::string& sample_id, double r, Rng& rng);

/// MLC of one sample under the encoder, eval mode, no gradient.
Tensor encode_mlc(const QConformer& model, const EegSample& sample, const std::string& task);

/// Mean conditioned NLL over the batch, one AdamW step on the prefix (and
/// adapter). Throws FrozenViolation if the LM is not frozen or any LM
/// parameter received a gradient.
double prefix_tune_step(VirtualPrefix& prefix, AdamW& opt, const FrozenLm& lm, const std::vector<Tensor>& mlcs,
                        const std::vector<std::vector<std::int64_t>>& targets);

std::string bridged_generate(const VirtualPrefix& prefix, const FrozenLm& lm, const QConformer& encoder,
                             const EegSample& sample, const DecodeMode& mode, std::int64_t max_len);

}  // namespace belt2
